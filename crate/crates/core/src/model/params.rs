use alloc::string::String;
use alloc::vec::Vec;

/// Name, shape and position of one tensor inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl TensorInfo {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> core::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// How to initialize a tensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Init {
    Zeros,
    Ones,
    TruncNormal(f64),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamLayout {
    tensors: Vec<TensorInfo>,
    inits: Vec<Init>,
    total: usize,
}

impl ParamLayout {
    pub(crate) fn push(&mut self, name: String, shape: Vec<usize>, init: Init) -> usize {
        let offset = self.total;
        let info = TensorInfo { name, shape, offset };
        self.total += info.len();
        self.tensors.push(info);
        self.inits.push(init);
        offset
    }

    pub fn tensors(&self) -> &[TensorInfo] {
        &self.tensors
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn find(&self, name: &str) -> Option<&TensorInfo> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub(crate) fn inits(&self) -> impl Iterator<Item = (&TensorInfo, Init)> {
        self.tensors.iter().zip(self.inits.iter().copied())
    }
}
