//! Links a validated policy document against the registry into an executable
//! plan, and renders the plan as readable source.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::entity::{Entity, Value, ValueType};
use crate::platform::CommunityState;
use crate::policy::{PolicyDocument, SettingValue, Settings};
use crate::reference::{render_segments, ReferenceToken, Segment};
use crate::registry::{ComponentDescriptor, ComponentKind, Registry, SettingSpec};
use crate::stdlib::behaviors::{
    BaseActionBehavior, Behavior, DecoratorBehavior, ExecutionBehavior, FilterBehavior, ProcedureBehavior,
};
use crate::stdlib::decorators::hook_kinds;
use crate::stdlib::executions::ExecutionError;
use crate::stdlib::filters::apply_filter;
use crate::validate::{validate_structure, Diagnostic, EVENT_TIME_FIELD};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CompileError {
    #[error("policy targets library version {policy}, loaded library is version {registry}")]
    StaleRegistry { policy: u64, registry: u64 },
    #[error("component `{0}` has no registered behavior")]
    InternalLinkError(String),
    #[error("policy has {} validation diagnostics; first: {}", .0.len(), .0[0])]
    Invalid(Vec<Diagnostic>),
}

/// Settings of one component with values left symbolic until use.
#[derive(Debug, Clone, PartialEq)]
pub struct Binding {
    specs: Vec<SettingSpec>,
    values: Settings,
}

impl Binding {
    fn new(descriptor: &ComponentDescriptor, values: &Settings) -> Self {
        Self { specs: descriptor.settings.clone(), values: values.clone() }
    }

    /// The value given for `name`, or its declared default.
    pub fn raw(&self, name: &str) -> Option<SettingValue> {
        self.values.get(name).cloned().or_else(|| {
            self.specs
                .iter()
                .find(|s| s.name == name)
                .and_then(|s| s.default.clone())
                .map(SettingValue::Literal)
        })
    }

    pub fn references(&self) -> impl Iterator<Item = &ReferenceToken> {
        self.values.values().flat_map(SettingValue::references)
    }

    /// Substitutes slot values. Optional settings without a value are left out.
    pub fn bind(
        &self,
        slots: &BTreeMap<ReferenceToken, Value>,
        community: &CommunityState,
    ) -> Result<BTreeMap<String, Value>, ExecutionError> {
        let mut out = BTreeMap::new();
        for spec in &self.specs {
            let Some(raw) = self.raw(&spec.name) else {
                continue;
            };
            let text_setting = spec.entity == Entity::Text && spec.value_type == ValueType::Scalar;
            let slot = |token: &ReferenceToken| slots.get(token).ok_or_else(|| ExecutionError::UnfilledSlot(token.clone()));
            let value = match raw {
                SettingValue::Literal(json) => Value::from_literal(spec.entity, spec.value_type, &json)
                    .map_err(|_| ExecutionError::BadSetting(spec.name.clone()))?,
                SettingValue::Reference(token) => {
                    let value = slot(&token)?;
                    if text_setting {
                        Value::Text(community.display_value(value))
                    } else {
                        value.clone()
                    }
                }
                SettingValue::Template(segments) => {
                    let mut text = String::new();
                    for segment in &segments {
                        match segment {
                            Segment::Literal(s) => text.push_str(s),
                            Segment::Reference(token) => text.push_str(&community.display_value(slot(token)?)),
                        }
                    }
                    Value::Text(text)
                }
                SettingValue::Malformed { .. } => return Err(ExecutionError::BadSetting(spec.name.clone())),
            };
            out.insert(spec.name.clone(), value);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundFilter {
    pub field: String,
    pub filter: String,
    pub behavior: FilterBehavior,
    pub settings: BTreeMap<String, Value>,
}

/// Base-action test plus the conjunction of all filters.
#[derive(Debug, Clone, PartialEq)]
pub struct Matcher {
    pub base_action: String,
    pub action: BaseActionBehavior,
    pub filters: Vec<BoundFilter>,
}

impl Matcher {
    /// On a match, returns the variables filters exported.
    pub fn matches(
        &self,
        kind: &str,
        fields: &BTreeMap<String, Value>,
        at: i64,
        community: &CommunityState,
    ) -> Option<BTreeMap<String, Value>> {
        if kind != self.base_action {
            return None;
        }
        let time = Value::Timestamp(at);
        let mut exports = BTreeMap::new();
        for filter in &self.filters {
            let field = if filter.field == EVENT_TIME_FIELD { Some(&time) } else { fields.get(&filter.field) };
            let outcome = apply_filter(filter.behavior, field?, &filter.settings, community);
            if !outcome.matched {
                return None;
            }
            exports.extend(outcome.exports);
        }
        Some(exports)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundProcedure {
    pub name: String,
    pub behavior: ProcedureBehavior,
    pub binding: Binding,
    /// Declared output variables.
    pub variables: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundDecorator {
    pub name: String,
    pub behavior: DecoratorBehavior,
    pub binding: Binding,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundExecution {
    pub name: String,
    pub behavior: ExecutionBehavior,
    pub binding: Binding,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "link", content = "name", rename_all = "snake_case")]
pub enum ChainLink {
    Decorator(String),
    Base(String),
}

impl fmt::Display for ChainLink {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChainLink::Decorator(name) | ChainLink::Base(name) => f.write_str(name),
        }
    }
}

/// Where a slot's value comes from and when it is known.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "source", content = "name", rename_all = "snake_case")]
pub enum SlotSource {
    /// A field of the governed action, known at open.
    ActionField(String),
    /// A variable exported by a filter, known at open.
    FilterExport(String),
    /// A procedure setting, bound at open.
    ProcedureSetting(String),
    /// A procedure variable, refreshed at each evaluation and final at close.
    ProcedureOutput(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecutablePolicy {
    pub policy_id: String,
    pub registry_version: u64,
    pub matcher: Matcher,
    pub procedure: BoundProcedure,
    /// Listed order, which is also evaluation order: the first is outermost.
    pub decorators: Vec<BoundDecorator>,
    pub procedure_chain: Vec<ChainLink>,
    /// Indices into `decorators`.
    pub start_hooks: Vec<usize>,
    pub vote_hooks: Vec<usize>,
    pub tick_hooks: Vec<usize>,
    pub pass_program: Vec<BoundExecution>,
    pub fail_program: Vec<BoundExecution>,
    pub binding_plan: BTreeMap<ReferenceToken, SlotSource>,
}

fn descriptor<'r>(registry: &'r Registry, kind: ComponentKind, name: &str) -> Result<&'r ComponentDescriptor, CompileError> {
    registry.lookup(kind, name).map_err(|_| CompileError::InternalLinkError(name.to_owned()))
}

fn check(doc: &PolicyDocument, registry: &Registry) -> Result<(), CompileError> {
    if doc.registry_version != registry.version() {
        return Err(CompileError::StaleRegistry { policy: doc.registry_version, registry: registry.version() });
    }
    let report = validate_structure(doc, registry);
    if !report.is_empty() {
        return Err(CompileError::Invalid(report.diagnostics));
    }
    Ok(())
}

pub fn compile(doc: &PolicyDocument, registry: &Registry) -> Result<ExecutablePolicy, CompileError> {
    check(doc, registry)?;
    let link = |d: &ComponentDescriptor| d.resolve_behavior().ok_or_else(|| CompileError::InternalLinkError(d.name.clone()));

    let base = descriptor(registry, ComponentKind::BaseAction, &doc.action.base_action)?;
    let Behavior::BaseAction(action) = link(base)? else {
        return Err(CompileError::InternalLinkError(base.name.clone()));
    };
    let mut binding_plan = BTreeMap::new();
    for var in &base.variables {
        binding_plan.insert(ReferenceToken::action(&var.name), SlotSource::ActionField(var.name.clone()));
    }
    let empty_slots = BTreeMap::new();
    let no_community = CommunityState::default();
    let mut filters = Vec::new();
    for instance in &doc.action.filters {
        let d = descriptor(registry, ComponentKind::Filter, &instance.filter)?;
        let Behavior::Filter(behavior) = link(d)? else {
            return Err(CompileError::InternalLinkError(d.name.clone()));
        };
        let settings = Binding::new(d, &instance.settings)
            .bind(&empty_slots, &no_community)
            .map_err(|e| CompileError::InternalLinkError(format!("{}: {e}", d.name)))?;
        for var in &d.variables {
            binding_plan.insert(ReferenceToken::action(&var.name), SlotSource::FilterExport(var.name.clone()));
        }
        filters.push(BoundFilter { field: instance.field.clone(), filter: d.name.clone(), behavior, settings });
    }

    let proc_d = descriptor(registry, ComponentKind::BaseProcedure, &doc.procedure.base_procedure)?;
    let Behavior::Procedure(behavior) = link(proc_d)? else {
        return Err(CompileError::InternalLinkError(proc_d.name.clone()));
    };
    for s in &proc_d.settings {
        binding_plan.insert(ReferenceToken::procedure(&s.name), SlotSource::ProcedureSetting(s.name.clone()));
    }
    for var in &proc_d.variables {
        binding_plan.insert(ReferenceToken::procedure(&var.name), SlotSource::ProcedureOutput(var.name.clone()));
    }
    let procedure = BoundProcedure {
        name: proc_d.name.clone(),
        behavior,
        binding: Binding::new(proc_d, &doc.procedure.settings),
        variables: proc_d.variables.iter().map(|v| v.name.clone()).collect(),
    };

    let mut decorators = Vec::new();
    let (mut start_hooks, mut vote_hooks, mut tick_hooks) = (Vec::new(), Vec::new(), Vec::new());
    for (i, instance) in doc.procedure.decorators.iter().enumerate() {
        let d = descriptor(registry, ComponentKind::Decorator, &instance.name)?;
        let Behavior::Decorator(behavior) = link(d)? else {
            return Err(CompileError::InternalLinkError(d.name.clone()));
        };
        let kinds = hook_kinds(behavior);
        for (has, list) in [(kinds.start, &mut start_hooks), (kinds.vote, &mut vote_hooks), (kinds.tick, &mut tick_hooks)] {
            if has {
                list.push(i);
            }
        }
        decorators.push(BoundDecorator { name: d.name.clone(), behavior, binding: Binding::new(d, &instance.settings) });
    }
    let mut procedure_chain: Vec<ChainLink> = decorators.iter().map(|d| ChainLink::Decorator(d.name.clone())).collect();
    procedure_chain.push(ChainLink::Base(procedure.name.clone()));

    let program = |list: &[crate::policy::ExecutionInstance]| -> Result<Vec<BoundExecution>, CompileError> {
        list.iter()
            .map(|instance| {
                let d = descriptor(registry, ComponentKind::Execution, &instance.execution)?;
                match link(d)? {
                    Behavior::Execution(behavior) => {
                        Ok(BoundExecution { name: d.name.clone(), behavior, binding: Binding::new(d, &instance.settings) })
                    }
                    _ => Err(CompileError::InternalLinkError(d.name.clone())),
                }
            })
            .collect()
    };

    Ok(ExecutablePolicy {
        policy_id: doc.id.clone(),
        registry_version: doc.registry_version,
        matcher: Matcher { base_action: base.name.clone(), action, filters },
        procedure,
        decorators,
        procedure_chain,
        start_hooks,
        vote_hooks,
        tick_hooks,
        pass_program: program(&doc.procedure.on_pass)?,
        fail_program: program(&doc.procedure.on_fail)?,
        binding_plan,
    })
}

/// Readable view of a compiled policy, one block per evaluation phase.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RenderedSource {
    /// Comment header and the conditions an action must meet.
    pub trigger: String,
    pub check: String,
    pub notify: String,
    pub pass: String,
    pub fail: String,
}

impl fmt::Display for RenderedSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.trigger)?;
        for (name, body) in [("check", &self.check), ("notify", &self.notify), ("pass", &self.pass), ("fail", &self.fail)] {
            writeln!(f, "# --- {name} ---")?;
            if !body.is_empty() {
                writeln!(f, "{body}")?;
            }
        }
        Ok(())
    }
}

fn show_value(value: Option<&SettingValue>) -> String {
    match value {
        None => "None".to_owned(),
        Some(SettingValue::Literal(json)) => json.to_string(),
        Some(SettingValue::Reference(token)) => token.to_string(),
        Some(SettingValue::Template(segments)) => {
            serde_json::Value::String(render_segments(segments)).to_string()
        }
        Some(SettingValue::Malformed { raw, .. }) => serde_json::Value::String(raw.clone()).to_string(),
    }
}

fn splice(template: &str, binding: &Binding, field: Option<&str>) -> String {
    let mut out = String::new();
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        let Some(len) = rest[start + 2..].find("}}") else {
            break;
        };
        out.push_str(&rest[..start]);
        let name = &rest[start + 2..start + 2 + len];
        match (name, field) {
            ("field", Some(field)) => out.push_str(&format!("action.{field}")),
            _ => out.push_str(&show_value(binding.raw(name).as_ref())),
        }
        rest = &rest[start + 2 + len + 2..];
    }
    out.push_str(rest);
    out
}

pub const JUROR_NOTICE: &str = "You have been selected as a juror. Please vote yes or no.";
pub const JURY_STARTED: &str = "A jury vote has started.";

pub fn render_source(doc: &PolicyDocument, registry: &Registry) -> Result<RenderedSource, CompileError> {
    let plan = compile(doc, registry)?;
    let lookup = |kind, name: &str| descriptor(registry, kind, name);

    let mut trigger = format!("# policy {}: {}\n", doc.id, doc.name);
    if !doc.description.is_empty() {
        for line in doc.description.lines() {
            trigger.push_str(&format!("# {line}\n"));
        }
    }
    trigger.push_str("# an action is governed when every condition holds\n");
    let base = lookup(ComponentKind::BaseAction, &doc.action.base_action)?;
    trigger.push_str(&base.source_view);
    trigger.push('\n');
    for instance in &doc.action.filters {
        let d = lookup(ComponentKind::Filter, &instance.filter)?;
        trigger.push_str(&splice(&d.source_view, &Binding::new(d, &instance.settings), Some(&instance.field)));
        trigger.push('\n');
    }

    let mut check = Vec::new();
    for (instance, bound) in doc.procedure.decorators.iter().zip(&plan.decorators) {
        let d = lookup(ComponentKind::Decorator, &instance.name)?;
        check.push(format!("# {}\n{}", bound.name, splice(&d.source_view, &bound.binding, None)));
    }
    let proc_d = lookup(ComponentKind::BaseProcedure, &doc.procedure.base_procedure)?;
    check.push(format!("# {}\n{}", proc_d.name, splice(&proc_d.source_view, &plan.procedure.binding, None)));

    let notify = match plan.procedure.behavior {
        ProcedureBehavior::Jury => {
            let mut text = format!(
                "for juror in jurors:\n    platform.direct_message(user=juror, text={})",
                serde_json::Value::String(JUROR_NOTICE.to_owned())
            );
            if plan.procedure.binding.raw("vote_channel").is_some() {
                text.push_str(&splice(
                    &format!(
                        "\nplatform.post_message(channel={{{{vote_channel}}}}, text={})",
                        serde_json::Value::String(JURY_STARTED.to_owned())
                    ),
                    &plan.procedure.binding,
                    None,
                ));
            }
            text
        }
        _ => String::new(),
    };

    let program = |instances: &[crate::policy::ExecutionInstance], bound: &[BoundExecution]| -> Result<Vec<String>, CompileError> {
        instances
            .iter()
            .zip(bound)
            .map(|(instance, b)| {
                let d = lookup(ComponentKind::Execution, &instance.execution)?;
                Ok(splice(&d.source_view, &b.binding, None))
            })
            .collect()
    };
    let mut pass = vec!["action.execute()".to_owned()];
    pass.extend(program(&doc.procedure.on_pass, &plan.pass_program)?);
    let fail = program(&doc.procedure.on_fail, &plan.fail_program)?;

    Ok(RenderedSource {
        trigger,
        check: check.join("\n\n"),
        notify,
        pass: pass.join("\n"),
        fail: fail.join("\n"),
    })
}

/// Every reference token read by the plan's settings, sorted.
pub fn plan_references(plan: &ExecutablePolicy) -> Vec<ReferenceToken> {
    let mut out: Vec<ReferenceToken> = plan
        .procedure
        .binding
        .references()
        .chain(plan.decorators.iter().flat_map(|d| d.binding.references()))
        .chain(plan.pass_program.iter().chain(&plan.fail_program).flat_map(|e| e.binding.references()))
        .cloned()
        .collect();
    out.sort();
    out.dedup();
    out
}
