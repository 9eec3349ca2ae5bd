//! The component library: typed descriptors for every policy building block.

use std::collections::HashSet;
use std::fmt;
use std::sync::{Arc, RwLock};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::entity::{Entity, Value, ValueType};
use crate::reference::{is_identifier, ReferenceToken, Scope};
use crate::stdlib::behaviors::{Behavior, SlotContract};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ComponentKind {
    BaseAction,
    Filter,
    BaseProcedure,
    Decorator,
    Execution,
}

impl fmt::Display for ComponentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SettingSpec {
    pub name: String,
    pub label: String,
    pub entity: Entity,
    pub value_type: ValueType,
    pub required: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariableSpec {
    pub name: String,
    pub label: String,
    pub entity: Entity,
    pub value_type: ValueType,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentDescriptor {
    pub kind: ComponentKind,
    pub name: String,
    pub label: String,
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub applies_to: Option<Entity>,
    pub settings: Vec<SettingSpec>,
    pub variables: Vec<VariableSpec>,
    pub behavior: String,
    pub source_view: String,
    /// Decorators only: base procedures the decorator is known to suit.
    /// Empty means no statement is made.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub compatible_with: Vec<String>,
}

impl ComponentDescriptor {
    pub fn setting(&self, name: &str) -> Option<&SettingSpec> {
        self.settings.iter().find(|s| s.name == name)
    }

    pub fn variable(&self, name: &str) -> Option<&VariableSpec> {
        self.variables.iter().find(|v| v.name == name)
    }

    /// The built-in this descriptor binds to. Always `Some` for descriptors
    /// held by a loaded [`Registry`].
    pub fn resolve_behavior(&self) -> Option<Behavior> {
        Behavior::resolve(self.kind, &self.behavior)
    }
}

/// A setting or variable visible to references, tagged with its scope.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableBinding {
    pub scope: Scope,
    pub name: String,
    pub label: String,
    pub entity: Entity,
    pub value_type: ValueType,
}

impl VariableBinding {
    pub fn token(&self) -> ReferenceToken {
        ReferenceToken::new(self.scope, self.name.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("malformed library document: {0}")]
    Parse(String),
    #[error("duplicate component {kind} `{name}`")]
    DuplicateComponent { kind: ComponentKind, name: String },
    #[error("component {kind} `{name}` binds unknown behavior `{behavior}`")]
    UnknownBehavior { kind: ComponentKind, name: String, behavior: String },
    #[error("bad identifier `{0}`")]
    BadIdentifier(String),
    #[error("filter `{0}` does not declare applies_to")]
    FilterWithoutAppliesTo(String),
    #[error("component `{0}` declares applies_to but is not a filter")]
    UnexpectedAppliesTo(String),
    #[error("component `{component}` declares `{name}` twice")]
    DuplicateName { component: String, name: String },
    #[error("component `{component}`: {detail}")]
    InvalidSpec { component: String, detail: String },
    #[error("component `{component}` disagrees with its behavior: {detail}")]
    BehaviorMismatch { component: String, detail: String },
    #[error("no {kind} named `{name}`")]
    NotFound { kind: ComponentKind, name: String },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LibraryFile {
    version: u64,
    components: Vec<ComponentDescriptor>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Registry {
    version: u64,
    components: IndexMap<(ComponentKind, String), ComponentDescriptor>,
}

impl Registry {
    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// Components in declaration order.
    pub fn components(&self) -> impl Iterator<Item = &ComponentDescriptor> {
        self.components.values()
    }

    pub fn of_kind(&self, kind: ComponentKind) -> impl Iterator<Item = &ComponentDescriptor> {
        self.components.values().filter(move |c| c.kind == kind)
    }

    pub fn lookup(&self, kind: ComponentKind, name: &str) -> Result<&ComponentDescriptor, RegistryError> {
        self.components
            .get(&(kind, name.to_owned()))
            .ok_or_else(|| RegistryError::NotFound { kind, name: name.to_owned() })
    }

    /// Serializes back to the library file format.
    pub fn to_library_json(&self) -> String {
        let file = LibraryFile {
            version: self.version,
            components: self.components.values().cloned().collect(),
        };
        let mut out = serde_json::to_string_pretty(&file).expect("library serializes");
        out.push('\n');
        out
    }
}

/// Parses and validates a library document. Any violation rejects the whole
/// document.
pub fn load_library(source: &str) -> Result<Registry, RegistryError> {
    let file: LibraryFile =
        serde_json::from_str(source).map_err(|e| RegistryError::Parse(e.to_string()))?;
    let mut components = IndexMap::with_capacity(file.components.len());
    for descriptor in file.components {
        check_descriptor(&descriptor)?;
        let key = (descriptor.kind, descriptor.name.clone());
        if components.contains_key(&key) {
            return Err(RegistryError::DuplicateComponent {
                kind: descriptor.kind,
                name: descriptor.name,
            });
        }
        components.insert(key, descriptor);
    }
    Ok(Registry { version: file.version, components })
}

/// `Name` or `Name.Name`, each part starting with an uppercase letter.
fn is_component_name(name: &str) -> bool {
    !name.is_empty()
        && name.split('.').all(|part| {
            let mut chars = part.chars();
            matches!(chars.next(), Some('A'..='Z')) && chars.all(|c| c.is_ascii_alphanumeric())
        })
}

fn check_descriptor(d: &ComponentDescriptor) -> Result<(), RegistryError> {
    if !is_component_name(&d.name) {
        return Err(RegistryError::BadIdentifier(d.name.clone()));
    }
    let behavior = d.resolve_behavior().ok_or_else(|| RegistryError::UnknownBehavior {
        kind: d.kind,
        name: d.name.clone(),
        behavior: d.behavior.clone(),
    })?;
    match (d.kind, d.applies_to) {
        (ComponentKind::Filter, None) => return Err(RegistryError::FilterWithoutAppliesTo(d.name.clone())),
        (ComponentKind::Filter, Some(_)) => {}
        (_, Some(_)) => return Err(RegistryError::UnexpectedAppliesTo(d.name.clone())),
        (_, None) => {}
    }
    if !d.compatible_with.is_empty() && d.kind != ComponentKind::Decorator {
        return Err(RegistryError::InvalidSpec {
            component: d.name.clone(),
            detail: "compatible_with is only meaningful on decorators".into(),
        });
    }

    let mut names = HashSet::new();
    let declared = d
        .settings
        .iter()
        .map(|s| (&s.name, s.entity, s.value_type))
        .chain(d.variables.iter().map(|v| (&v.name, v.entity, v.value_type)));
    for (name, entity, value_type) in declared {
        if !is_identifier(name) {
            return Err(RegistryError::BadIdentifier(name.clone()));
        }
        if !names.insert(name.as_str()) {
            return Err(RegistryError::DuplicateName { component: d.name.clone(), name: name.clone() });
        }
        if entity == Entity::UserList && value_type != ValueType::List {
            return Err(RegistryError::InvalidSpec {
                component: d.name.clone(),
                detail: format!("`{name}` is a UserList and must have value_type list"),
            });
        }
    }
    for s in &d.settings {
        if let Some(default) = &s.default {
            Value::from_literal(s.entity, s.value_type, default).map_err(|e| RegistryError::InvalidSpec {
                component: d.name.clone(),
                detail: format!("default of `{}`: {e}", s.name),
            })?;
        }
    }
    check_contract(d, behavior)
}

fn check_contract(d: &ComponentDescriptor, behavior: Behavior) -> Result<(), RegistryError> {
    let contract = behavior.contract();
    let mismatch = |detail: String| RegistryError::BehaviorMismatch { component: d.name.clone(), detail };
    if d.kind == ComponentKind::Filter && d.applies_to != contract.applies_to {
        return Err(mismatch(format!(
            "applies_to must be {:?}",
            contract.applies_to.expect("filter contracts name an entity")
        )));
    }
    let same_shape = |c: &SlotContract, entity: Entity, value_type: ValueType| {
        c.entity == entity && c.value_type == value_type
    };
    for c in contract.settings {
        let s = d
            .setting(c.name)
            .ok_or_else(|| mismatch(format!("missing setting `{}`", c.name)))?;
        if !same_shape(c, s.entity, s.value_type) {
            return Err(mismatch(format!("setting `{}` must be {} {}", c.name, c.entity, c.value_type)));
        }
        if c.required && !s.required && s.default.is_none() {
            return Err(mismatch(format!("setting `{}` must be required or defaulted", c.name)));
        }
    }
    if let Some(extra) = d.settings.iter().find(|s| !contract.settings.iter().any(|c| c.name == s.name)) {
        return Err(mismatch(format!("setting `{}` is not read by the behavior", extra.name)));
    }
    for c in contract.variables {
        let v = d
            .variable(c.name)
            .ok_or_else(|| mismatch(format!("missing variable `{}`", c.name)))?;
        if !same_shape(c, v.entity, v.value_type) {
            return Err(mismatch(format!("variable `{}` must be {} {}", c.name, c.entity, c.value_type)));
        }
    }
    if let Some(extra) = d.variables.iter().find(|v| !contract.variables.iter().any(|c| c.name == v.name)) {
        return Err(mismatch(format!("variable `{}` is not produced by the behavior", extra.name)));
    }
    Ok(())
}

/// Bindings whose entity and value shape equal the target setting's, in order.
pub fn compatible_variables(available: &[VariableBinding], target: &SettingSpec) -> Vec<VariableBinding> {
    available
        .iter()
        .filter(|b| b.entity == target.entity && b.value_type == target.value_type)
        .cloned()
        .collect()
}

/// Holds the current registry; reloads replace it wholesale or not at all.
#[derive(Debug, Default)]
pub struct RegistryStore {
    current: RwLock<Arc<Registry>>,
}

impl RegistryStore {
    pub fn new(registry: Registry) -> Self {
        Self { current: RwLock::new(Arc::new(registry)) }
    }

    pub fn current(&self) -> Arc<Registry> {
        self.current.read().expect("registry lock poisoned").clone()
    }

    pub fn reload(&self, source: &str) -> Result<u64, RegistryError> {
        let registry = load_library(source)?;
        let version = registry.version;
        *self.current.write().expect("registry lock poisoned") = Arc::new(registry);
        Ok(version)
    }
}
