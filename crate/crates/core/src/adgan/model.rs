use super::{Architecture, CriticActivation, ParameterSet, ViewEmbeddingSpec};
use crate::diffnet::{softmax_rows, Graph, Matrix, NodeId, ParamStore};
use crate::error::{Error, Result};

fn fc(graph: &mut Graph, store: &ParamStore, x: NodeId, name: &str) -> Result<NodeId> {
    let w = graph.param(store, store.id(&format!("{name}.w"))?);
    let b = graph.param(store, store.id(&format!("{name}.b"))?);
    let z = graph.matmul(x, w)?;
    graph.add_bias(z, b)
}

fn fc_relu(graph: &mut Graph, store: &ParamStore, x: NodeId, name: &str) -> Result<NodeId> {
    let z = fc(graph, store, x, name)?;
    Ok(graph.relu(z))
}

pub(crate) fn embed(
    graph: &mut Graph,
    store: &ParamStore,
    x: NodeId,
    spec: &ViewEmbeddingSpec,
    prefix: &str,
) -> Result<NodeId> {
    let width = graph.shape(x).1;
    if width != spec.input_dim() {
        return Err(Error::Shape(format!(
            "{prefix}: input width {width}, embedding expects {}",
            spec.input_dim()
        )));
    }
    if !spec.structured {
        return fc_relu(graph, store, x, &format!("{prefix}.flat"));
    }
    let mut parts = Vec::with_capacity(spec.groups.len());
    let mut start = 0;
    for (k, &size) in spec.groups.iter().enumerate() {
        let slice = graph.slice(x, start, start + size)?;
        parts.push(fc_relu(graph, store, slice, &format!("{prefix}.g{k}"))?);
        start += size;
    }
    let joined = graph.concat(&parts)?;
    fc_relu(graph, store, joined, &format!("{prefix}.comb"))
}

/// Generator: consumer embedding then FC+Sigmoid to survey space.
pub(crate) fn build_generator(graph: &mut Graph, params: &ParameterSet, u: NodeId) -> Result<NodeId> {
    let h = embed(graph, &params.store, u, &params.arch.consumer, "gen.cm")?;
    let z = fc(graph, &params.store, h, "gen.out")?;
    Ok(graph.sigmoid(z))
}

/// Embedded consumer channel of the discriminator; reusable across several
/// survey inputs for the same consumers.
pub(crate) fn build_consumer_channel(graph: &mut Graph, params: &ParameterSet, u: NodeId) -> Result<NodeId> {
    embed(graph, &params.store, u, &params.arch.consumer, "dis.cm")
}

pub(crate) struct DiscriminatorOut {
    pub critic: NodeId,
    pub logits: NodeId,
}

pub(crate) fn build_discriminator(
    graph: &mut Graph,
    params: &ParameterSet,
    consumer_channel: NodeId,
    s: NodeId,
) -> Result<DiscriminatorOut> {
    let store = &params.store;
    let sv = embed(graph, store, s, &params.arch.survey, "dis.sv")?;
    let joint = graph.concat(&[sv, consumer_channel])?;
    let trunk = fc_relu(graph, store, joint, "dis.trunk")?;
    let raw = fc(graph, store, trunk, "dis.critic")?;
    let critic = match params.arch.critic {
        CriticActivation::Linear => raw,
        CriticActivation::Sigmoid => graph.sigmoid(raw),
    };
    let logits = fc(graph, store, trunk, "dis.cls")?;
    Ok(DiscriminatorOut { critic, logits })
}

pub(crate) fn clamp_unit(u: &Matrix) -> Matrix {
    u.map(|v| v.clamp(0.0, 1.0))
}

fn check_width(m: &Matrix, width: usize, what: &str) -> Result<()> {
    if m.cols() != width || m.rows() == 0 {
        return Err(Error::Shape(format!(
            "{what}: got {}x{}, expected n x {width} with n >= 1",
            m.rows(),
            m.cols()
        )));
    }
    Ok(())
}

/// Applies a view embedding named `prefix` (e.g. `dis.sv`) from `store`.
pub fn view_embed(input: &Matrix, spec: &ViewEmbeddingSpec, store: &ParamStore, prefix: &str) -> Result<Matrix> {
    let mut graph = Graph::new();
    let x = graph.input(input.rows(), input.cols());
    let out = embed(&mut graph, store, x, spec, prefix)?;
    let tape = graph.forward(store, std::slice::from_ref(input))?;
    Ok(tape.value(out).clone())
}

/// Generated surveys for a batch of consumer model vectors; inputs are
/// clamped to `[0, 1]` first.
pub fn generate(params: &ParameterSet, u: &Matrix) -> Result<Matrix> {
    let arch: &Architecture = &params.arch;
    check_width(u, arch.consumer_dim(), "consumer batch")?;
    let mut graph = Graph::new();
    let ui = graph.input(u.rows(), u.cols());
    let out = build_generator(&mut graph, params, ui)?;
    let tape = graph.forward(&params.store, &[clamp_unit(u)])?;
    Ok(tape.value(out).clone())
}

/// Critic scores (n x 1) and class probabilities (n x 4).
pub fn discriminate(params: &ParameterSet, u: &Matrix, s: &Matrix) -> Result<(Matrix, Matrix)> {
    let arch = &params.arch;
    check_width(u, arch.consumer_dim(), "consumer batch")?;
    check_width(s, arch.survey_dim(), "survey batch")?;
    if u.rows() != s.rows() {
        return Err(Error::Shape(format!(
            "{} consumer rows vs {} survey rows",
            u.rows(),
            s.rows()
        )));
    }
    let mut graph = Graph::new();
    let ui = graph.input(u.rows(), u.cols());
    let si = graph.input(s.rows(), s.cols());
    let cm = build_consumer_channel(&mut graph, params, ui)?;
    let out = build_discriminator(&mut graph, params, cm, si)?;
    let tape = graph.forward(&params.store, &[u.clone(), s.clone()])?;
    Ok((tape.value(out.critic).clone(), softmax_rows(tape.value(out.logits))))
}

/// Predicted class per row.
pub fn classify(params: &ParameterSet, u: &Matrix, s: &Matrix) -> Result<Vec<usize>> {
    let (_, probs) = discriminate(params, u, s)?;
    Ok(probs.argmax_rows())
}
