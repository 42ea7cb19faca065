//! LoRA, MoELoRA and ID-LoRA layers, parameter counting and adapter files.

mod any;
mod config;
mod count;
mod idlora;
mod io;
mod layer;
mod lora;
mod moelora;

pub use any::AnyAdapter;
pub use config::{AdapterConfig, Method};
pub use count::{count_site, count_trainable, format_count, ArchitectureDescriptor, Site};
pub use idlora::{build_idlora, IdLoraGrads, IdLoraLayer};
pub use io::{deserialize_adapter, peek_adapter_config, serialize_adapter, ADAPTER_MAGIC, ADAPTER_VERSION};
pub use layer::{Adapter, Gradients};
pub use lora::{build_lora, LoraGrads, LoraLayer};
pub use moelora::{build_moelora, Expert, MoeLoraGrads, MoeLoraLayer};
