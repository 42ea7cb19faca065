use crate::adapters::config::AdapterConfig;
use crate::adapters::idlora::IdLoraLayer;
use crate::adapters::layer::{Adapter, Gradients};
use crate::adapters::lora::LoraLayer;
use crate::adapters::moelora::MoeLoraLayer;
use crate::error::Result;
use crate::linalg::Matrix;
use crate::scalar::Real;

/// Any of the three trainable layer kinds.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyAdapter<T: Real> {
    Lora(LoraLayer<T>),
    MoeLora(MoeLoraLayer<T>),
    IdLora(IdLoraLayer<T>),
}

macro_rules! dispatch {
    ($self:expr, $layer:ident => $body:expr) => {
        match $self {
            AnyAdapter::Lora($layer) => $body,
            AnyAdapter::MoeLora($layer) => $body,
            AnyAdapter::IdLora($layer) => $body,
        }
    };
}

impl<T: Real> Adapter<T> for AnyAdapter<T> {
    fn config(&self) -> &AdapterConfig {
        dispatch!(self, l => l.config())
    }

    fn frozen_weight(&self) -> &Matrix<T> {
        dispatch!(self, l => l.frozen_weight())
    }

    fn delta(&self, h: &[T]) -> Result<Vec<T>> {
        dispatch!(self, l => l.delta(h))
    }

    fn backward(&self, h: &[T], upstream: &[T]) -> Result<Gradients<T>> {
        dispatch!(self, l => l.backward(h, upstream))
    }

    fn param_names(&self) -> Vec<String> {
        dispatch!(self, l => l.param_names())
    }

    fn params(&self) -> Vec<&[T]> {
        dispatch!(self, l => l.params())
    }

    fn params_mut(&mut self) -> Vec<&mut [T]> {
        dispatch!(self, l => l.params_mut())
    }

    fn frozen_blocks(&self) -> Vec<&[T]> {
        dispatch!(self, l => l.frozen_blocks())
    }
}

impl<T: Real> From<LoraLayer<T>> for AnyAdapter<T> {
    fn from(l: LoraLayer<T>) -> Self {
        AnyAdapter::Lora(l)
    }
}

impl<T: Real> From<MoeLoraLayer<T>> for AnyAdapter<T> {
    fn from(l: MoeLoraLayer<T>) -> Self {
        AnyAdapter::MoeLora(l)
    }
}

impl<T: Real> From<IdLoraLayer<T>> for AnyAdapter<T> {
    fn from(l: IdLoraLayer<T>) -> Self {
        AnyAdapter::IdLora(l)
    }
}
