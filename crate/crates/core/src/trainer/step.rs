use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use super::{TrainConfig, TrainState};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::fields::FieldBundle;
use crate::losses::{self, LossBreakdown};
use crate::priors::{DepthPrior, FlowPrior, PriorKind, PriorStore};
use crate::renderer::{render_ray, render_ray_backward, RayUpstream, SamplerConfig};
use crate::seed;

/// Frames and priors of the training cameras.
#[derive(Clone, Debug)]
pub struct TrainData {
    pub dataset: Dataset,
    pub priors: PriorStore,
}

#[derive(Clone, Debug)]
enum Item {
    Photo { v: usize, t: u32, x: u32, y: u32 },
    Flow(FlowPrior),
    Depth(DepthPrior),
}

/// Retries when the chosen view has no prior towards the drawn partner frame.
const PAIR_ATTEMPTS: usize = 8;

fn draw_flow<R: Rng>(store: &PriorStore, kind: PriorKind, offset: u32, rng: &mut R) -> Option<FlowPrior> {
    let views = store.views_with(kind);
    for _ in 0..PAIR_ATTEMPTS {
        let &(t, v) = views.choose(rng)?;
        let pairs: Vec<FlowPrior> = store
            .select_pairs(t, v, offset, rng)
            .into_iter()
            .filter(|r| r.kind == kind)
            .collect();
        if let Some(r) = pairs.choose(rng) {
            return Some(*r);
        }
    }
    None
}

fn draw_batch(data: &TrainData, config: &TrainConfig, iteration: u64) -> Vec<Item> {
    let mut rng = seed::rng(&[config.seed, iteration, 0xBA7C]);
    let ds = &data.dataset;
    let mut items = Vec::with_capacity(config.batch_rays + config.prior_rays());
    for _ in 0..config.batch_rays {
        let v = *ds.selected.choose(&mut rng).expect("at least one camera");
        let cam = ds.camera(v);
        items.push(Item::Photo {
            v,
            t: rng.gen_range(1..=ds.info.n_frames),
            x: rng.gen_range(0..cam.width()),
            y: rng.gen_range(0..cam.height()),
        });
    }
    let pairs = config.prior_rays() / 2;
    let w = &config.weights;
    let budget = [(PriorKind::Sparse, w.sparse_flow, pairs / 2), (PriorKind::Dense, w.dense_flow, pairs - pairs / 2)];
    for (kind, lambda, n) in budget {
        if lambda == 0.0 {
            continue;
        }
        for _ in 0..n {
            if let Some(r) = draw_flow(&data.priors, kind, config.prior_offset, &mut rng) {
                items.push(Item::Flow(r));
            }
        }
    }
    if w.sparse_depth > 0.0 {
        let views = data.priors.views_with_depth();
        for _ in 0..config.prior_rays() / 2 {
            let Some(&(t, v)) = views.choose(&mut rng) else { break };
            if let Some(r) = data.priors.depths_at(t, v).choose(&mut rng) {
                items.push(Item::Depth(*r));
            }
        }
    }
    items
}

#[derive(Clone, Copy, Default)]
struct Counts {
    ph: usize,
    sf: usize,
    df: usize,
    sd: usize,
}

#[derive(Clone, Copy, Default)]
struct Sums {
    ph: f64,
    sf: f64,
    df: f64,
    sd: f64,
}

fn per_item_scale(lambda: f64, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        lambda / n as f64
    }
}

struct Shard<'a> {
    data: &'a TrainData,
    fields: &'a FieldBundle,
    config: &'a TrainConfig,
    sampler: SamplerConfig,
    counts: Counts,
    iteration: u64,
}

impl Shard<'_> {
    fn ray(&self, v: usize, t: u32, pixel: (f64, f64)) -> Result<crate::geometry::Ray> {
        let ds = &self.data.dataset;
        ds.camera(v).ray_for_pixel(pixel, t, &ds.info.bounds)
    }

    fn ray_seed(&self, index: usize, side: u64) -> u64 {
        seed::mix(&[self.config.seed, self.iteration, index as u64, side])
    }

    fn run(&self, items: &[(usize, &Item)], grads: &mut FieldBundle) -> Result<Sums> {
        let w = &self.config.weights;
        let c = &self.counts;
        let mut sums = Sums::default();
        for &(index, item) in items {
            match item {
                Item::Photo { v, t, x, y } => {
                    let ray = self.ray(*v, *t, (*x as f64, *y as f64))?;
                    let r = render_ray(&ray, self.fields, &self.sampler, self.ray_seed(index, 0))?;
                    let truth = self.data.dataset.frame(*v, *t).get(*x, *y);
                    let (l, g) = losses::photometric(&r.color, &truth);
                    sums.ph += l;
                    let s = per_item_scale(1.0, c.ph);
                    let up = RayUpstream { color: g.map(|x| x * s), ..Default::default() };
                    render_ray_backward(&r, self.fields, &up, grads);
                }
                Item::Flow(p) => {
                    let ra = self.ray(p.v, p.t, (p.x, p.y))?;
                    let rb = self.ray(p.u, p.s, (p.xp, p.yp))?;
                    let a = render_ray(&ra, self.fields, &self.sampler, self.ray_seed(index, 0))?;
                    let b = render_ray(&rb, self.fields, &self.sampler, self.ray_seed(index, 1))?;
                    let scale = match p.kind {
                        PriorKind::Sparse => per_item_scale(w.sparse_flow, c.sf),
                        PriorKind::Dense => per_item_scale(w.dense_flow, c.df),
                    };
                    let (l, ua, ub) = losses::flow_pair(&a, &b, scale);
                    match p.kind {
                        PriorKind::Sparse => sums.sf += l,
                        PriorKind::Dense => sums.df += l,
                    }
                    render_ray_backward(&a, self.fields, &ua, grads);
                    render_ray_backward(&b, self.fields, &ub, grads);
                }
                Item::Depth(p) => {
                    let ray = self.ray(p.v, p.t, (p.x, p.y))?;
                    let r = render_ray(&ray, self.fields, &self.sampler, self.ray_seed(index, 0))?;
                    let (l, g) = losses::depth(r.depth, p.z);
                    sums.sd += l;
                    let up = RayUpstream { depth: g * per_item_scale(w.sparse_depth, c.sd), ..Default::default() };
                    render_ray_backward(&r, self.fields, &up, grads);
                }
            }
        }
        Ok(sums)
    }
}

/// One optimization step: draws a batch, renders it, backpropagates every
/// loss term and applies Adam. Returns the losses before the update.
pub fn train_step(state: &mut TrainState, data: &TrainData, config: &TrainConfig) -> Result<LossBreakdown> {
    let iteration = state.iteration;
    let items = draw_batch(data, config, iteration);
    let mut counts = Counts::default();
    for it in &items {
        match it {
            Item::Photo { .. } => counts.ph += 1,
            Item::Flow(p) if p.kind == PriorKind::Sparse => counts.sf += 1,
            Item::Flow(_) => counts.df += 1,
            Item::Depth(_) => counts.sd += 1,
        }
    }
    let shard = Shard {
        data,
        fields: &state.fields,
        config,
        sampler: SamplerConfig { n_samples: config.samples_per_ray, mode: config.sample_mode },
        counts,
        iteration,
    };
    let n_shards = if config.deterministic {
        config.grad_shards
    } else {
        rayon::current_num_threads()
    }
    .clamp(1, items.len().max(1));
    let indexed: Vec<(usize, &Item)> = items.iter().enumerate().collect();
    let chunk = indexed.len().div_ceil(n_shards).max(1);
    let results: Vec<Result<(FieldBundle, Sums)>> = indexed
        .par_chunks(chunk)
        .map(|part| {
            let mut g = state.fields.zeros_like();
            let sums = shard.run(part, &mut g)?;
            Ok((g, sums))
        })
        .collect();
    let mut grads: Option<FieldBundle> = None;
    let mut sums = Sums::default();
    for r in results {
        let (g, s) = r?;
        sums.ph += s.ph;
        sums.sf += s.sf;
        sums.df += s.df;
        sums.sd += s.sd;
        match grads.as_mut() {
            None => grads = Some(g),
            Some(acc) => acc.add_assign(&g),
        }
    }
    let grads = grads.unwrap_or_else(|| state.fields.zeros_like());
    let mean = |s: f64, n: usize| if n == 0 { 0.0 } else { s / n as f64 };
    let mut loss = LossBreakdown::new(
        mean(sums.ph, counts.ph),
        mean(sums.sf, counts.sf),
        mean(sums.df, counts.df),
        mean(sums.sd, counts.sd),
        &config.weights,
    );
    loss.n_photometric = counts.ph;
    loss.n_sparse_flow = counts.sf;
    loss.n_dense_flow = counts.df;
    loss.n_sparse_depth = counts.sd;

    let max_abs_grad = grads.max_abs();
    if let Some(term) = loss.non_finite_term() {
        return Err(Error::NonFinite { iteration, term: term.into(), max_abs_grad });
    }
    if !max_abs_grad.is_finite() {
        return Err(Error::NonFinite { iteration, term: "gradient".into(), max_abs_grad });
    }
    let untouched = grads.untouched();
    if !untouched.is_empty() {
        return Err(Error::Validation(format!(
            "step {iteration}: no gradient reached {}",
            untouched.join(", ")
        )));
    }
    state.apply_gradients(&grads, config);
    state.iteration += 1;
    Ok(loss)
}
