use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::sample::Sample;
use super::vocab::{Vocab, PAD};
use super::{AttributionModel, EmbeddedGraph};
use crate::autodiff::{softmax, Bindings, Graph, GraphBuilder, NodeId, Tensor};
use crate::error::{Error, Result};

/// Large negative additive mask for attention to PAD keys.
const MASK_VALUE: f64 = -1e9;
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub embedding_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    pub max_len: usize,
    pub max_vocab: usize,
    pub classes: usize,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            embedding_dim: 64,
            layers: 2,
            heads: 4,
            ffn_dim: 128,
            max_len: 256,
            max_vocab: 30_000,
            classes: 2,
            seed: 0,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::invalid(format!("classifier config: {m}")));
        if self.layers == 0 {
            return fail("layers must be >= 1");
        }
        if self.heads == 0 {
            return fail("heads must be >= 1");
        }
        if self.embedding_dim == 0 || !self.embedding_dim.is_multiple_of(self.heads) {
            return fail("embedding_dim must be a positive multiple of heads");
        }
        if self.classes < 2 {
            return fail("classes must be >= 2");
        }
        if self.max_len == 0 || self.ffn_dim == 0 {
            return fail("max_len and ffn_dim must be positive");
        }
        if self.max_vocab < 3 {
            return fail("max_vocab must leave room for at least one word");
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.embedding_dim / self.heads
    }
}

/// Result of one full forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelOutput {
    pub logits: Vec<f64>,
    pub confidence: Vec<f64>,
    /// `attention[layer][head]` is a `[T, T]` matrix; row = query, column = key.
    pub attention: Vec<Vec<Tensor>>,
    pub input_embeddings: Tensor,
    /// 1-based; ties resolve to the lowest class.
    pub predicted_class: usize,
}

/// Argmax with ties broken toward the lowest index, returned 1-based.
pub fn argmax_class(logits: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate() {
        if v > logits[best] {
            best = i;
        }
    }
    best + 1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct NamedTensor {
    pub name: String,
    pub value: Tensor,
}

/// Small self-attention text classifier with mean pooling over non-PAD tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextClassifier {
    pub(crate) config: ClassifierConfig,
    pub(crate) vocab: Vocab,
    pub(crate) params: Vec<NamedTensor>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    #[serde(flatten)]
    model: TextClassifier,
}

pub(crate) enum InputMode<'a> {
    /// Token embeddings are gathered from the table parameter.
    Gather,
    /// Token embeddings are a leaf bound by the caller.
    Embedded(&'a mut Option<NodeId>),
}

pub(crate) enum Head {
    Logits,
    TargetLogit(usize),
    Loss(usize),
}

pub(crate) struct BuiltGraph {
    pub graph: Graph,
    pub params: Vec<Option<NodeId>>,
    pub logits: NodeId,
    pub output: Option<NodeId>,
    pub attention: Vec<Vec<NodeId>>,
}

const TOKEN_EMB: usize = 0;
const POS_EMB: usize = 1;
const PER_HEAD: usize = 4;
const PER_LAYER_FIXED: usize = 4;

impl TextClassifier {
    /// Randomly initialised model for `vocab`.
    pub fn init(config: ClassifierConfig, vocab: Vocab) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let d = config.embedding_dim;
        let dh = config.head_dim();
        let f = config.ffn_dim;
        let mut params = Vec::new();
        let mut push = |name: String, rows: usize, cols: usize, limit: f64| {
            let data = if limit > 0.0 {
                (0..rows * cols)
                    .map(|_| rng.gen_range(-limit..limit))
                    .collect()
            } else {
                vec![0.0; rows * cols]
            };
            params.push(NamedTensor {
                name,
                value: Tensor::from_parts(vec![rows, cols], data),
            });
        };
        let xavier = |a: usize, b: usize| (6.0 / (a + b) as f64).sqrt();
        push("token_embedding".into(), vocab.len(), d, 0.5);
        push("position_embedding".into(), config.max_len, d, 0.05);
        for l in 0..config.layers {
            for h in 0..config.heads {
                for part in ["query", "key", "value"] {
                    push(format!("layer{l}.head{h}.{part}"), d, dh, xavier(d, dh));
                }
                push(format!("layer{l}.head{h}.output"), dh, d, xavier(dh, d));
            }
            push(format!("layer{l}.ffn_in"), d, f, xavier(d, f));
            push(format!("layer{l}.ffn_in_bias"), 1, f, 0.0);
            push(format!("layer{l}.ffn_out"), f, d, xavier(f, d));
            push(format!("layer{l}.ffn_out_bias"), 1, d, 0.0);
        }
        push(
            "classifier".into(),
            d,
            config.classes,
            xavier(d, config.classes),
        );
        push("classifier_bias".into(), 1, config.classes, 0.0);
        Ok(Self {
            config,
            vocab,
            params,
        })
    }

    pub fn config(&self) -> &ClassifierConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn num_params(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    fn layer_base(&self, layer: usize) -> usize {
        2 + layer * (self.config.heads * PER_HEAD + PER_LAYER_FIXED)
    }

    /// Token ids of a sample, truncated to the maximum length.
    pub fn encode_words(&self, sample: &Sample) -> Vec<usize> {
        sample
            .words
            .iter()
            .take(self.config.max_len)
            .map(|w| self.vocab.id(&w.text))
            .collect()
    }

    pub(crate) fn build_graph(
        &self,
        ids: &[usize],
        input: InputMode<'_>,
        head: Head,
    ) -> Result<BuiltGraph> {
        let t = ids.len();
        if t == 0 {
            return Err(Error::invalid("empty input"));
        }
        if t > self.config.max_len {
            return Err(Error::invalid(format!(
                "input of {t} tokens exceeds max length {}",
                self.config.max_len
            )));
        }
        let cfg = &self.config;
        let mut b = GraphBuilder::new();
        let mut params: Vec<Option<NodeId>> = vec![None; self.params.len()];
        let mut param = |b: &mut GraphBuilder, i: usize| -> NodeId {
            *params[i].get_or_insert_with(|| b.leaf(self.params[i].name.clone()))
        };

        let tokens = match input {
            InputMode::Gather => {
                let table = param(&mut b, TOKEN_EMB);
                b.gather(table, ids.to_vec())
            }
            InputMode::Embedded(slot) => {
                let leaf = b.leaf("input_embeddings");
                *slot = Some(leaf);
                leaf
            }
        };
        let pos_table = param(&mut b, POS_EMB);
        let positions = b.gather(pos_table, (0..t).collect());
        let mut h = b.add(tokens, positions);

        // All-PAD inputs fall back to attending and pooling over every position.
        let valid: Vec<bool> = if ids.iter().all(|&id| id == PAD) {
            vec![true; t]
        } else {
            ids.iter().map(|&id| id != PAD).collect()
        };
        let n_valid = valid.iter().filter(|&&v| v).count() as f64;
        let mask_data = (0..t)
            .flat_map(|_| valid.iter().map(|&v| if v { 0.0 } else { MASK_VALUE }))
            .collect();
        let mask = b.constant(Tensor::from_parts(vec![t, t], mask_data));
        let ones = b.constant(Tensor::filled(&[t, 1], 1.0));
        let pool = b.constant(Tensor::from_parts(
            vec![1, t],
            valid
                .iter()
                .map(|&v| if v { 1.0 / n_valid } else { 0.0 })
                .collect(),
        ));
        let inv_sqrt = 1.0 / (cfg.head_dim() as f64).sqrt();

        let mut attention = Vec::with_capacity(cfg.layers);
        for l in 0..cfg.layers {
            let base = self.layer_base(l);
            let mut layer_attn = Vec::with_capacity(cfg.heads);
            let mut mixed: Option<NodeId> = None;
            for hd in 0..cfg.heads {
                let hb = base + hd * PER_HEAD;
                let (wq, wk, wv, wo) = (
                    param(&mut b, hb),
                    param(&mut b, hb + 1),
                    param(&mut b, hb + 2),
                    param(&mut b, hb + 3),
                );
                let q = b.matmul(h, wq);
                let k = b.matmul(h, wk);
                let v = b.matmul(h, wv);
                let kt = b.transpose(k);
                let scores = b.matmul(q, kt);
                let scores = b.scale(scores, inv_sqrt);
                let scores = b.add(scores, mask);
                let weights = b.softmax(scores);
                layer_attn.push(weights);
                let ctx = b.matmul(weights, v);
                let out = b.matmul(ctx, wo);
                mixed = Some(match mixed {
                    Some(acc) => b.add(acc, out),
                    None => out,
                });
            }
            attention.push(layer_attn);
            h = b.add(h, mixed.expect("heads >= 1"));

            let fb = base + cfg.heads * PER_HEAD;
            let (w1, b1, w2, b2) = (
                param(&mut b, fb),
                param(&mut b, fb + 1),
                param(&mut b, fb + 2),
                param(&mut b, fb + 3),
            );
            let z = b.matmul(h, w1);
            let bias = b.matmul(ones, b1);
            let z = b.add(z, bias);
            let z = b.relu(z);
            let z = b.matmul(z, w2);
            let bias = b.matmul(ones, b2);
            let z = b.add(z, bias);
            h = b.add(h, z);
        }

        let pooled = b.matmul(pool, h);
        let n = self.params.len();
        let (wc, bc) = (param(&mut b, n - 2), param(&mut b, n - 1));
        let logits = b.matmul(pooled, wc);
        let logits = b.add(logits, bc);
        let output = match head {
            Head::Logits => None,
            Head::TargetLogit(class) => {
                let onehot = one_hot_column(cfg.classes, class)?;
                let sel = b.constant(onehot);
                Some(b.matmul(logits, sel))
            }
            Head::Loss(class) => {
                check_class(class, cfg.classes)?;
                Some(b.cross_entropy(logits, class - 1))
            }
        };
        Ok(BuiltGraph {
            graph: b.build(),
            params,
            logits,
            output,
            attention,
        })
    }

    pub(crate) fn param_bindings<'a>(&'a self, built: &BuiltGraph) -> Bindings<'a> {
        built
            .params
            .iter()
            .zip(&self.params)
            .filter_map(|(id, p)| id.map(|id| (id, &p.value)))
            .collect()
    }

    /// Forward pass on raw token ids.
    pub fn forward_ids(&self, ids: &[usize]) -> Result<ModelOutput> {
        let built = self.build_graph(ids, InputMode::Gather, Head::Logits)?;
        let eval = built.graph.forward(&self.param_bindings(&built))?;
        let logits = eval.value(built.logits).data().to_vec();
        let confidence = softmax(&logits);
        let attention = built
            .attention
            .iter()
            .map(|layer| layer.iter().map(|&id| eval.value(id).clone()).collect())
            .collect();
        let input_embeddings = self.embed(ids);
        Ok(ModelOutput {
            predicted_class: argmax_class(&logits),
            logits,
            confidence,
            attention,
            input_embeddings,
        })
    }

    /// Full forward pass; inputs longer than the maximum length are truncated.
    pub fn forward_full(&self, sample: &Sample) -> Result<ModelOutput> {
        let ids = self.encode_words(sample);
        if ids.is_empty() {
            return Err(Error::invalid(format!("sample {} is empty", sample.id)));
        }
        self.forward_ids(&ids)
    }

    pub fn predict(&self, sample: &Sample) -> Result<usize> {
        Ok(self.forward_full(sample)?.predicted_class)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&Checkpoint {
            version: CHECKPOINT_VERSION,
            model: self.clone(),
        })?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(json)?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::data(format!(
                "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
                ck.version
            )));
        }
        ck.model.config.validate()?;
        Ok(ck.model)
    }
}

fn check_class(class: usize, classes: usize) -> Result<()> {
    if class == 0 || class > classes {
        return Err(Error::invalid(format!(
            "class {class} outside 1..={classes}"
        )));
    }
    Ok(())
}

pub(crate) fn one_hot_column(classes: usize, class: usize) -> Result<Tensor> {
    check_class(class, classes)?;
    let mut col = Tensor::zeros(&[classes, 1]);
    col.data_mut()[class - 1] = 1.0;
    Ok(col)
}

impl AttributionModel for TextClassifier {
    fn num_classes(&self) -> usize {
        self.config.classes
    }

    fn encode(&self, sample: &Sample) -> Vec<usize> {
        self.encode_words(sample)
    }

    fn embed(&self, ids: &[usize]) -> Tensor {
        let table = &self.params[TOKEN_EMB].value;
        let d = table.cols();
        let mut data = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            data.extend_from_slice(table.row(id));
        }
        Tensor::from_parts(vec![ids.len(), d], data)
    }

    fn logits(&self, ids: &[usize]) -> Result<Vec<f64>> {
        let built = self.build_graph(ids, InputMode::Gather, Head::Logits)?;
        let eval = built.graph.forward(&self.param_bindings(&built))?;
        Ok(eval.value(built.logits).data().to_vec())
    }

    fn target_graph(&self, ids: &[usize], class: usize) -> Result<EmbeddedGraph<'_>> {
        let mut input = None;
        let built = self.build_graph(
            ids,
            InputMode::Embedded(&mut input),
            Head::TargetLogit(class),
        )?;
        let fixed = built
            .params
            .iter()
            .zip(&self.params)
            .filter_map(|(id, p)| id.map(|id| (id, &p.value)))
            .collect();
        Ok(EmbeddedGraph {
            graph: built.graph,
            input: input.expect("embedded mode sets the input leaf"),
            output: built.output.expect("target head requested"),
            fixed,
        })
    }

    fn attention(&self, ids: &[usize]) -> Result<Option<Vec<Vec<Tensor>>>> {
        Ok(Some(self.forward_ids(ids)?.attention))
    }
}
