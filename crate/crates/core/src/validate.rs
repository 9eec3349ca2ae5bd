//! Static checks of a policy document against a registry and, optionally, a
//! community snapshot.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::entity::{Entity, Value, ValueType};
use crate::platform::CommunitySnapshot;
use crate::policy::{PolicyDocument, SettingValue, Settings};
use crate::reference::{ReferenceToken, Scope};
use crate::registry::{ComponentDescriptor, ComponentKind, Registry, SettingSpec, VariableBinding};
use crate::stdlib::behaviors::Behavior;

/// Pseudo-field naming the time an action happened. Every base action has it.
pub const EVENT_TIME_FIELD: &str = "at";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DiagnosticCode {
    RegistryVersionMismatch,
    BadPolicyId,
    UnknownComponent,
    WrongKind,
    UnknownField,
    FilterEntityMismatch,
    DuplicateFilterField,
    DuplicateVariable,
    MissingSetting,
    UnknownSetting,
    BadLiteral,
    BadReference,
    EntityMismatch,
    ValueTypeMismatch,
    UnresolvedReference,
    ReferenceNotAllowed,
    UnknownEntityValue,
    InvalidSettingValue,
    DuplicateDecorator,
    IncompatibleDecorator,
}

impl fmt::Display for DiagnosticCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub path: String,
    pub code: DiagnosticCode,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}: {}", self.path, self.code, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub diagnostics: Vec<Diagnostic>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.diagnostics.is_empty()
    }

    pub fn codes(&self) -> Vec<DiagnosticCode> {
        self.diagnostics.iter().map(|d| d.code).collect()
    }
}

/// Full validation: structure, types, references, and community values.
pub fn validate_policy(doc: &PolicyDocument, registry: &Registry, community: &CommunitySnapshot) -> ValidationReport {
    let mut v = Validator::new(registry, Some(community));
    v.document(doc);
    ValidationReport { diagnostics: v.diagnostics }
}

/// Validation without community checks. This is what compilation requires.
pub fn validate_structure(doc: &PolicyDocument, registry: &Registry) -> ValidationReport {
    let mut v = Validator::new(registry, None);
    v.document(doc);
    ValidationReport { diagnostics: v.diagnostics }
}

fn find<'r>(registry: &'r Registry, kind: ComponentKind, name: &str) -> Option<&'r ComponentDescriptor> {
    registry.lookup(kind, name).ok()
}

/// Variables visible to references for a document in progress. An empty or
/// unknown base action contributes nothing; likewise the base procedure.
pub fn global_variable_list(doc: &PolicyDocument, registry: &Registry) -> Vec<VariableBinding> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    let mut push = |out: &mut Vec<VariableBinding>, b: VariableBinding| {
        if seen.insert((b.scope, b.name.clone())) {
            out.push(b);
        }
    };
    if let Some(base) = find(registry, ComponentKind::BaseAction, &doc.action.base_action) {
        for var in &base.variables {
            push(&mut out, binding(Scope::Action, &var.name, &var.label, var.entity, var.value_type));
        }
        for instance in &doc.action.filters {
            if let Some(filter) = find(registry, ComponentKind::Filter, &instance.filter) {
                for var in &filter.variables {
                    push(&mut out, binding(Scope::Action, &var.name, &var.label, var.entity, var.value_type));
                }
            }
        }
    }
    if let Some(procedure) = find(registry, ComponentKind::BaseProcedure, &doc.procedure.base_procedure) {
        for s in &procedure.settings {
            push(&mut out, binding(Scope::Procedure, &s.name, &s.label, s.entity, s.value_type));
        }
        for var in &procedure.variables {
            push(&mut out, binding(Scope::Procedure, &var.name, &var.label, var.entity, var.value_type));
        }
    }
    out
}

fn binding(scope: Scope, name: &str, label: &str, entity: Entity, value_type: ValueType) -> VariableBinding {
    VariableBinding { scope, name: name.to_owned(), label: label.to_owned(), entity, value_type }
}

/// Policy ids appear in URLs and file names.
pub fn is_policy_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 64
        && id.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_' || b == b'-')
}

struct Validator<'a> {
    registry: &'a Registry,
    community: Option<&'a CommunitySnapshot>,
    diagnostics: Vec<Diagnostic>,
    action_vars: BTreeMap<String, (Entity, ValueType)>,
    procedure_vars: BTreeMap<String, (Entity, ValueType)>,
}

impl<'a> Validator<'a> {
    fn new(registry: &'a Registry, community: Option<&'a CommunitySnapshot>) -> Self {
        Self {
            registry,
            community,
            diagnostics: Vec::new(),
            action_vars: BTreeMap::new(),
            procedure_vars: BTreeMap::new(),
        }
    }

    fn report(&mut self, path: impl Into<String>, code: DiagnosticCode, message: impl Into<String>) {
        self.diagnostics.push(Diagnostic { path: path.into(), code, message: message.into() });
    }

    /// Finds a component, reporting a missing one or one of a different kind.
    fn component(&mut self, path: &str, kind: ComponentKind, name: &str) -> Option<&'a ComponentDescriptor> {
        if let Some(found) = find(self.registry, kind, name) {
            return Some(found);
        }
        let other = [
            ComponentKind::BaseAction,
            ComponentKind::Filter,
            ComponentKind::BaseProcedure,
            ComponentKind::Decorator,
            ComponentKind::Execution,
        ]
        .into_iter()
        .find(|k| *k != kind && find(self.registry, *k, name).is_some());
        match other {
            Some(actual) => self.report(path, DiagnosticCode::WrongKind, format!("`{name}` is a {actual}, expected a {kind}")),
            None => self.report(path, DiagnosticCode::UnknownComponent, format!("no {kind} named `{name}`")),
        }
        None
    }

    fn document(&mut self, doc: &PolicyDocument) {
        if doc.registry_version != self.registry.version() {
            self.report(
                "registry_version",
                DiagnosticCode::RegistryVersionMismatch,
                format!(
                    "policy targets library version {}, loaded library is version {}",
                    doc.registry_version,
                    self.registry.version()
                ),
            );
        }
        if !is_policy_id(&doc.id) {
            self.report("id", DiagnosticCode::BadPolicyId, format!("`{}` is not a valid policy id", doc.id));
        }
        self.action(doc);
        self.procedure(doc);
    }

    fn action(&mut self, doc: &PolicyDocument) {
        let Some(base) = self.component("action.base_action", ComponentKind::BaseAction, &doc.action.base_action) else {
            return;
        };
        for var in &base.variables {
            self.action_vars.insert(var.name.clone(), (var.entity, var.value_type));
        }
        let mut constrained = BTreeSet::new();
        for (i, instance) in doc.action.filters.iter().enumerate() {
            let path = format!("action.filters[{i}]");
            let field_entity = if instance.field == EVENT_TIME_FIELD {
                Some(Entity::Timestamp)
            } else {
                base.variable(&instance.field).map(|v| v.entity)
            };
            let Some(field_entity) = field_entity else {
                self.report(
                    &path,
                    DiagnosticCode::UnknownField,
                    format!("{} has no field `{}`", base.name, instance.field),
                );
                continue;
            };
            if !constrained.insert(instance.field.as_str()) {
                self.report(
                    &path,
                    DiagnosticCode::DuplicateFilterField,
                    format!("field `{}` already has a filter", instance.field),
                );
            }
            let Some(filter) = self.component(&format!("{path}.filter"), ComponentKind::Filter, &instance.filter) else {
                continue;
            };
            if filter.applies_to != Some(field_entity) {
                self.report(
                    &path,
                    DiagnosticCode::FilterEntityMismatch,
                    format!(
                        "{} applies to {}, but field `{}` is {}",
                        filter.name,
                        filter.applies_to.map_or_else(|| "nothing".to_owned(), |e| e.to_string()),
                        instance.field,
                        field_entity
                    ),
                );
            }
            self.settings(&format!("{path}.settings"), &filter.settings, &instance.settings, &[]);
            for var in &filter.variables {
                if self.action_vars.contains_key(&var.name) {
                    self.report(
                        &path,
                        DiagnosticCode::DuplicateVariable,
                        format!("{} exports `{}`, which the action already defines", filter.name, var.name),
                    );
                } else {
                    self.action_vars.insert(var.name.clone(), (var.entity, var.value_type));
                }
            }
        }
    }

    fn procedure(&mut self, doc: &PolicyDocument) {
        let proc_doc = &doc.procedure;
        let base = self.component("procedure.base_procedure", ComponentKind::BaseProcedure, &proc_doc.base_procedure);
        if let Some(base) = base {
            self.settings("procedure.settings", &base.settings, &proc_doc.settings, &[Scope::Action]);
            self.procedure_constraints(base, &proc_doc.settings);
            for s in &base.settings {
                self.procedure_vars.insert(s.name.clone(), (s.entity, s.value_type));
            }
            for var in &base.variables {
                self.procedure_vars.insert(var.name.clone(), (var.entity, var.value_type));
            }
        }
        let mut names = BTreeSet::new();
        for (i, instance) in proc_doc.decorators.iter().enumerate() {
            let path = format!("procedure.decorators[{i}]");
            if !names.insert(instance.name.as_str()) {
                self.report(
                    &path,
                    DiagnosticCode::DuplicateDecorator,
                    format!("decorator `{}` is listed twice", instance.name),
                );
            }
            let Some(decorator) = self.component(&format!("{path}.name"), ComponentKind::Decorator, &instance.name) else {
                continue;
            };
            if let Some(base) = base {
                if !decorator.compatible_with.is_empty() && !decorator.compatible_with.contains(&base.name) {
                    self.report(
                        &path,
                        DiagnosticCode::IncompatibleDecorator,
                        format!("{} does not apply to {}", decorator.name, base.name),
                    );
                }
            }
            self.settings(
                &format!("{path}.settings"),
                &decorator.settings,
                &instance.settings,
                &[Scope::Action, Scope::Procedure],
            );
        }
        for (list, executions) in [("on_pass", &proc_doc.on_pass), ("on_fail", &proc_doc.on_fail)] {
            for (i, instance) in executions.iter().enumerate() {
                let path = format!("procedure.{list}[{i}]");
                let Some(execution) =
                    self.component(&format!("{path}.execution"), ComponentKind::Execution, &instance.execution)
                else {
                    continue;
                };
                self.settings(
                    &format!("{path}.settings"),
                    &execution.settings,
                    &instance.settings,
                    &[Scope::Action, Scope::Procedure],
                );
            }
        }
    }

    /// Procedure-specific rules on literal settings, e.g. threshold ranges.
    fn procedure_constraints(&mut self, base: &ComponentDescriptor, settings: &Settings) {
        let Some(Behavior::Procedure(behavior)) = base.resolve_behavior() else {
            return;
        };
        let mut literals = BTreeMap::new();
        for spec in &base.settings {
            let raw = match settings.get(&spec.name) {
                Some(SettingValue::Literal(raw)) => raw,
                Some(_) => continue,
                None => match &spec.default {
                    Some(raw) => raw,
                    None => continue,
                },
            };
            if let Ok(value) = Value::from_literal(spec.entity, spec.value_type, raw) {
                literals.insert(spec.name.clone(), value);
            }
        }
        if let Err(crate::procedures::ProcedureError::BadSetting { name, detail }) = behavior.check_settings(&literals) {
            // Settings given as references are only known at runtime.
            if literals.contains_key(name) {
                self.report(format!("procedure.settings.{name}"), DiagnosticCode::InvalidSettingValue, detail);
            }
        }
    }

    fn settings(&mut self, path: &str, specs: &[SettingSpec], given: &Settings, scopes: &[Scope]) {
        for name in given.keys() {
            if !specs.iter().any(|s| &s.name == name) {
                self.report(format!("{path}.{name}"), DiagnosticCode::UnknownSetting, format!("no setting named `{name}`"));
            }
        }
        for spec in specs {
            let setting_path = format!("{path}.{}", spec.name);
            match given.get(&spec.name) {
                None if spec.required && spec.default.is_none() => {
                    self.report(setting_path, DiagnosticCode::MissingSetting, format!("`{}` is required", spec.name));
                }
                None => {}
                Some(value) => self.setting_value(&setting_path, spec, value, scopes),
            }
        }
    }

    fn setting_value(&mut self, path: &str, spec: &SettingSpec, value: &SettingValue, scopes: &[Scope]) {
        let interpolates = spec.entity == Entity::Text && spec.value_type == ValueType::Scalar;
        match value {
            SettingValue::Malformed { raw, error } => {
                self.report(path, DiagnosticCode::BadReference, format!("`{raw}`: {error}"));
            }
            SettingValue::Literal(raw) => match Value::from_literal(spec.entity, spec.value_type, raw) {
                Ok(value) => self.community_value(path, &value),
                Err(detail) => self.report(path, DiagnosticCode::BadLiteral, detail),
            },
            SettingValue::Reference(token) => {
                let Some((entity, value_type)) = self.resolve(path, token, scopes) else {
                    return;
                };
                if interpolates {
                    return;
                }
                if entity != spec.entity {
                    self.report(
                        path,
                        DiagnosticCode::EntityMismatch,
                        format!("{token} is {entity}, `{}` needs {}", spec.name, spec.entity),
                    );
                } else if value_type != spec.value_type {
                    self.report(
                        path,
                        DiagnosticCode::ValueTypeMismatch,
                        format!("{token} is a {value_type}, `{}` needs a {}", spec.name, spec.value_type),
                    );
                }
            }
            SettingValue::Template(_) => {
                if !interpolates {
                    self.report(
                        path,
                        DiagnosticCode::EntityMismatch,
                        format!("text with references only fits Text settings; `{}` is {}", spec.name, spec.entity),
                    );
                }
                for token in value.references() {
                    self.resolve(path, token, scopes);
                }
            }
        }
    }

    fn resolve(&mut self, path: &str, token: &ReferenceToken, scopes: &[Scope]) -> Option<(Entity, ValueType)> {
        if !scopes.contains(&token.scope) {
            let allowed = if scopes.is_empty() {
                "only literal values are allowed here".to_owned()
            } else {
                format!("only {} references are allowed here", scopes.iter().map(|s| s.as_str()).collect::<Vec<_>>().join("/"))
            };
            self.report(path, DiagnosticCode::ReferenceNotAllowed, format!("{token}: {allowed}"));
            return None;
        }
        let vars = match token.scope {
            Scope::Action => &self.action_vars,
            Scope::Procedure => &self.procedure_vars,
        };
        match vars.get(&token.name) {
            Some(found) => Some(*found),
            None => {
                self.report(path, DiagnosticCode::UnresolvedReference, format!("{token} does not name a variable"));
                None
            }
        }
    }

    fn community_value(&mut self, path: &str, value: &Value) {
        let Some(community) = self.community else {
            return;
        };
        let missing: Vec<String> = match value {
            Value::User(id) if !community.has_user(id) => vec![format!("user `{id}`")],
            Value::Role(role) if !community.has_role(role) => vec![format!("role `{role}`")],
            Value::Channel(id) if !community.has_channel(id) => vec![format!("channel `{id}`")],
            Value::Document(id) if !community.has_document(id) => vec![format!("document `{id}`")],
            Value::UserList(ids) => ids.iter().filter(|id| !community.has_user(id)).map(|id| format!("user `{id}`")).collect(),
            Value::List(items) => {
                for item in items {
                    self.community_value(path, item);
                }
                Vec::new()
            }
            _ => Vec::new(),
        };
        if !missing.is_empty() {
            self.report(path, DiagnosticCode::UnknownEntityValue, format!("no {} in the community", missing.join(", ")));
        }
    }
}

/// What a form may offer for one setting of a draft: variables a reference
/// could name there, and community values a literal could take.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SettingOptions {
    pub path: String,
    pub entity: Entity,
    pub value_type: ValueType,
    pub required: bool,
    pub variables: Vec<VariableBinding>,
    pub community_values: Vec<String>,
}

/// Options for every setting of every component the draft names. Filter
/// settings take literals only; procedure settings see the action scope;
/// decorators and executions see both scopes. Text settings accept any
/// variable, which is then shown as text.
pub fn setting_options(doc: &PolicyDocument, registry: &Registry, community: &CommunitySnapshot) -> Vec<SettingOptions> {
    let visible = global_variable_list(doc, registry);
    let in_scope = |scopes: &[Scope]| -> Vec<VariableBinding> {
        visible.iter().filter(|b| scopes.contains(&b.scope)).cloned().collect()
    };
    let mut out = Vec::new();
    let mut component = |prefix: String, descriptor: Option<&ComponentDescriptor>, available: &[VariableBinding]| {
        for spec in descriptor.map(|d| d.settings.as_slice()).unwrap_or_default() {
            let variables = if spec.entity == Entity::Text && spec.value_type == ValueType::Scalar {
                available.to_vec()
            } else {
                crate::registry::compatible_variables(available, spec)
            };
            out.push(SettingOptions {
                path: format!("{prefix}.settings.{}", spec.name),
                entity: spec.entity,
                value_type: spec.value_type,
                required: spec.required,
                variables,
                community_values: community.values_of(spec.entity),
            });
        }
    };
    for (i, f) in doc.action.filters.iter().enumerate() {
        component(format!("action.filters[{i}]"), find(registry, ComponentKind::Filter, &f.filter), &[]);
    }
    let action_scope = in_scope(&[Scope::Action]);
    let both = in_scope(&[Scope::Action, Scope::Procedure]);
    let procedure = &doc.procedure;
    component("procedure".into(), find(registry, ComponentKind::BaseProcedure, &procedure.base_procedure), &action_scope);
    for (i, d) in procedure.decorators.iter().enumerate() {
        component(format!("procedure.decorators[{i}]"), find(registry, ComponentKind::Decorator, &d.name), &both);
    }
    for (list, executions) in [("on_pass", &procedure.on_pass), ("on_fail", &procedure.on_fail)] {
        for (i, e) in executions.iter().enumerate() {
            component(format!("procedure.{list}[{i}]"), find(registry, ComponentKind::Execution, &e.execution), &both);
        }
    }
    out
}
