//! Learnable parameter records, generic over what each slot holds: owned
//! [`Tensor`]s for storage, tape [`Var`](crate::numkit::Var)s during a forward
//! pass, or plain shapes when describing a layout.
//!
//! Weight matrices are stored `out × in` and applied as `x · Wᵀ`.

use crate::numkit::Tensor;

macro_rules! param_record {
    ($(#[$meta:meta])* $name:ident { $($field:ident),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name<T = Tensor> {
            $(pub $field: T,)+
        }

        impl<T> $name<T> {
            pub fn map_named<U>(&self, prefix: &str, f: &mut impl FnMut(&str, &T) -> U) -> $name<U> {
                $name { $($field: f(&format!("{prefix}{}", stringify!($field)), &self.$field),)+ }
            }

            pub fn fields(&self, prefix: &str) -> Vec<(String, &T)> {
                vec![$((format!("{prefix}{}", stringify!($field)), &self.$field),)+]
            }

            pub fn fields_mut(&mut self, prefix: &str) -> Vec<(String, &mut T)> {
                vec![$((format!("{prefix}{}", stringify!($field)), &mut self.$field),)+]
            }
        }
    };
}

param_record! {
    /// One LSTM direction: input, forget, cell-candidate and output gates,
    /// each with input weights `w_*` (hidden × input), recurrent weights `u_*`
    /// (hidden × hidden) and bias `b_*` (hidden).
    LstmCellParams {
        w_i, u_i, b_i,
        w_f, u_f, b_f,
        w_g, u_g, b_g,
        w_o, u_o, b_o,
    }
}

param_record! {
    /// GRU cell. `m` is the reset gate, `n` the update gate. The candidate
    /// weight `w_c` (hidden × (hidden + input)) acts on `[m ∘ h, x]`.
    GruCellParams {
        w_m, u_m, b_m,
        w_n, u_n, b_n,
        w_c, b_c,
    }
}

param_record! {
    /// Output projection: `logits = features · wᵀ + b`.
    DenseParams { w, b }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiLstmParams<T = Tensor> {
    pub fwd: LstmCellParams<T>,
    pub bwd: LstmCellParams<T>,
}

/// Parameters of a whole model. Which recurrent blocks are present depends on
/// the variant.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T = Tensor> {
    pub bilstm: Option<BiLstmParams<T>>,
    pub gru: Option<GruCellParams<T>>,
    pub head: DenseParams<T>,
}

impl<T> ModelParams<T> {
    pub fn map_named<U>(&self, f: &mut impl FnMut(&str, &T) -> U) -> ModelParams<U> {
        ModelParams {
            bilstm: self.bilstm.as_ref().map(|b| BiLstmParams {
                fwd: b.fwd.map_named("bilstm.fwd.", f),
                bwd: b.bwd.map_named("bilstm.bwd.", f),
            }),
            gru: self.gru.as_ref().map(|g| g.map_named("gru.", f)),
            head: self.head.map_named("head.", f),
        }
    }

    /// Every slot with its dotted name, in canonical order.
    pub fn named(&self) -> Vec<(String, &T)> {
        let mut out = Vec::new();
        if let Some(b) = &self.bilstm {
            out.extend(b.fwd.fields("bilstm.fwd."));
            out.extend(b.bwd.fields("bilstm.bwd."));
        }
        if let Some(g) = &self.gru {
            out.extend(g.fields("gru."));
        }
        out.extend(self.head.fields("head."));
        out
    }

    pub fn named_mut(&mut self) -> Vec<(String, &mut T)> {
        let mut out = Vec::new();
        if let Some(b) = &mut self.bilstm {
            out.extend(b.fwd.fields_mut("bilstm.fwd."));
            out.extend(b.bwd.fields_mut("bilstm.bwd."));
        }
        if let Some(g) = &mut self.gru {
            out.extend(g.fields_mut("gru."));
        }
        out.extend(self.head.fields_mut("head."));
        out
    }
}

impl ModelParams<Tensor> {
    pub fn zero_grad(&mut self) {
        for (_, t) in self.named_mut() {
            t.zero_grad();
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.named().iter().map(|(_, t)| t.len()).sum()
    }
}

pub(crate) fn lstm_shapes(input: usize, hidden: usize) -> LstmCellParams<Vec<usize>> {
    let w = vec![hidden, input];
    let u = vec![hidden, hidden];
    let b = vec![hidden];
    LstmCellParams {
        w_i: w.clone(),
        u_i: u.clone(),
        b_i: b.clone(),
        w_f: w.clone(),
        u_f: u.clone(),
        b_f: b.clone(),
        w_g: w.clone(),
        u_g: u.clone(),
        b_g: b.clone(),
        w_o: w,
        u_o: u,
        b_o: b,
    }
}

pub(crate) fn gru_shapes(input: usize, hidden: usize) -> GruCellParams<Vec<usize>> {
    GruCellParams {
        w_m: vec![hidden, input],
        u_m: vec![hidden, hidden],
        b_m: vec![hidden],
        w_n: vec![hidden, input],
        u_n: vec![hidden, hidden],
        b_n: vec![hidden],
        w_c: vec![hidden, hidden + input],
        b_c: vec![hidden],
    }
}
