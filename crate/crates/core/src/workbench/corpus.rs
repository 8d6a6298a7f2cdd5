use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng};
use crate::sequence::{Lattice, ReferenceAlignment};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Cv,
    Adapt,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Cv, Split::Adapt];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Cv => "cv",
            Split::Adapt => "adapt",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "cv" => Ok(Split::Cv),
            "adapt" => Ok(Split::Adapt),
            other => Err(Error::invalid(format!("unknown split {other:?}"))),
        }
    }
}

/// `x ↦ A x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineTransform {
    pub matrix: Matrix,
    pub offset: Vec<f64>,
}

impl AffineTransform {
    pub fn identity(dim: usize) -> Self {
        let mut matrix = Matrix::zeros(dim, dim);
        for i in 0..dim {
            matrix.set(i, i, 1.0);
        }
        Self {
            matrix,
            offset: vec![0.0; dim],
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.matrix.rows())
            .map(|r| {
                self.matrix
                    .row(r)
                    .iter()
                    .zip(x)
                    .map(|(a, v)| a * v)
                    .sum::<f64>()
                    + self.offset[r]
            })
            .collect()
    }
}

/// Compact generator settings, read from a flat TOML file by the CLI and
/// expanded into a full [`CorpusSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusParams {
    pub num_states: usize,
    pub feature_dim: usize,
    pub num_speakers: usize,
    pub utterances_per_speaker: usize,
    pub cv_utterances_per_speaker: usize,
    pub adapt_speakers: usize,
    pub frames_per_utterance: usize,
    /// State means are drawn uniformly from `[-mean_spread, mean_spread)`.
    pub mean_spread: f64,
    pub emission_std: f64,
    pub self_loop: f64,
    /// Off-diagonal scale of each speaker's feature rotation.
    pub speaker_rotation: f64,
    /// Standard deviation of each speaker's feature offset.
    pub speaker_offset: f64,
    pub seed: u64,
}

impl Default for CorpusParams {
    fn default() -> Self {
        Self {
            num_states: 12,
            feature_dim: 8,
            num_speakers: 8,
            utterances_per_speaker: 12,
            cv_utterances_per_speaker: 3,
            adapt_speakers: 2,
            frames_per_utterance: 50,
            mean_spread: 1.5,
            emission_std: 1.0,
            self_loop: 0.6,
            speaker_rotation: 0.15,
            speaker_offset: 0.3,
            seed: 1,
        }
    }
}

/// Full generative model of a synthetic corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSpec {
    pub num_states: usize,
    pub feature_dim: usize,
    pub num_speakers: usize,
    pub utterances_per_speaker: usize,
    pub cv_utterances_per_speaker: usize,
    pub adapt_speakers: usize,
    pub frames_per_utterance: usize,
    /// `num_states x feature_dim`.
    pub means: Matrix,
    /// Diagonal variances, `num_states x feature_dim`.
    pub variances: Matrix,
    pub self_loop: Vec<f64>,
    /// Row `s` is the distribution over the next state when leaving `s`.
    pub next_state: Matrix,
    /// One per speaker: training speakers first, then adaptation speakers.
    pub speaker_transforms: Vec<AffineTransform>,
    pub seed: u64,
}

impl CorpusSpec {
    pub fn from_params(p: &CorpusParams) -> Result<Self> {
        if p.num_states < 2 || p.feature_dim == 0 {
            return Err(Error::invalid("corpus needs at least 2 states and 1 feature"));
        }
        let (s, d) = (p.num_states, p.feature_dim);
        let mut rng = Rng::new(p.seed, "corpus/means");
        let means = Matrix::from_vec(
            s,
            d,
            (0..s * d)
                .map(|_| rng.uniform_f32_exact(-p.mean_spread, p.mean_spread))
                .collect(),
        )?;
        let variances = Matrix::filled(s, d, p.emission_std * p.emission_std);

        let mut rng = Rng::new(p.seed, "corpus/transitions");
        let mut next_state = Matrix::zeros(s, s);
        for from in 0..s {
            let w: Vec<f64> = (0..s)
                .map(|to| if to == from { 0.0 } else { rng.unit().powi(3) + 1e-3 })
                .collect();
            let z: f64 = w.iter().sum();
            for (to, v) in w.iter().enumerate() {
                next_state.set(from, to, v / z);
            }
        }

        let speaker_transforms = (0..p.num_speakers + p.adapt_speakers)
            .map(|spk| {
                let mut rng = Rng::derive(p.seed, "corpus/speaker", spk);
                let mut t = AffineTransform::identity(d);
                let scale = p.speaker_rotation / (d as f64).sqrt();
                for v in t.matrix.as_mut_slice() {
                    *v += scale * rng.normal();
                }
                for o in &mut t.offset {
                    *o = p.speaker_offset * rng.normal();
                }
                t
            })
            .collect();

        let spec = Self {
            num_states: s,
            feature_dim: d,
            num_speakers: p.num_speakers,
            utterances_per_speaker: p.utterances_per_speaker,
            cv_utterances_per_speaker: p.cv_utterances_per_speaker,
            adapt_speakers: p.adapt_speakers,
            frames_per_utterance: p.frames_per_utterance,
            means,
            variances,
            self_loop: vec![p.self_loop; s],
            next_state,
            speaker_transforms,
            seed: p.seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let (s, d) = (self.num_states, self.feature_dim);
        if s == 0 || d == 0 || self.frames_per_utterance == 0 || self.num_speakers == 0 {
            return Err(Error::invalid("corpus dimensions must be at least 1"));
        }
        if self.cv_utterances_per_speaker > self.utterances_per_speaker {
            return Err(Error::invalid("more cv utterances than utterances per speaker"));
        }
        if self.means.shape() != (s, d) || self.variances.shape() != (s, d) {
            return Err(Error::shape("emission parameters do not match state/feature counts"));
        }
        if self
            .variances
            .as_slice()
            .iter()
            .any(|v| !(v.is_finite() && *v >= 0.0))
        {
            return Err(Error::invalid("degenerate emission covariance"));
        }
        if self.self_loop.len() != s || self.self_loop.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::invalid("self-loop probabilities must lie in [0, 1]"));
        }
        if self.next_state.shape() != (s, s) {
            return Err(Error::shape("next-state matrix must be num_states square"));
        }
        for r in 0..s {
            let row = self.next_state.row(r);
            let sum: f64 = row.iter().sum();
            if row.iter().any(|p| *p < 0.0) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(format!("next-state row {r} is not a distribution")));
            }
        }
        if self.speaker_transforms.len() != self.num_speakers + self.adapt_speakers {
            return Err(Error::invalid("one affine transform per speaker is required"));
        }
        for t in &self.speaker_transforms {
            if t.matrix.shape() != (d, d) || t.offset.len() != d {
                return Err(Error::shape("speaker transform does not match feature_dim"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub speaker: usize,
    /// Raw (unspliced) features, `frames x feature_dim`.
    pub features: Matrix,
    pub alignment: ReferenceAlignment,
    pub lattice: Option<Lattice>,
}

impl Utterance {
    pub fn num_frames(&self) -> usize {
        self.features.rows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub num_states: usize,
    pub feature_dim: usize,
    pub train: Vec<Utterance>,
    pub cv: Vec<Utterance>,
    pub adapt: Vec<Utterance>,
}

impl Corpus {
    pub fn split(&self, split: Split) -> &[Utterance] {
        match split {
            Split::Train => &self.train,
            Split::Cv => &self.cv,
            Split::Adapt => &self.adapt,
        }
    }

    pub fn split_mut(&mut self, split: Split) -> &mut Vec<Utterance> {
        match split {
            Split::Train => &mut self.train,
            Split::Cv => &mut self.cv,
            Split::Adapt => &mut self.adapt,
        }
    }
}

fn gen_utterance(spec: &CorpusSpec, speaker: usize, index: usize) -> Utterance {
    let id = format!("spk{speaker:03}_utt{index:03}");
    let mut rng = Rng::new(spec.seed, &format!("corpus/utt/{id}"));
    let transform = &spec.speaker_transforms[speaker];
    let (frames, d) = (spec.frames_per_utterance, spec.feature_dim);
    let mut features = Matrix::zeros(frames, d);
    let mut states = Vec::with_capacity(frames);
    let mut state = rng.below(spec.num_states);
    for t in 0..frames {
        if t > 0 && !rng.bernoulli(spec.self_loop[state]) {
            state = rng.categorical(spec.next_state.row(state));
        }
        states.push(state);
        let clean: Vec<f64> = (0..d)
            .map(|i| {
                let var = spec.variances.get(state, i);
                let noise = rng.normal();
                if var == 0.0 {
                    spec.means.get(state, i)
                } else {
                    spec.means.get(state, i) + var.sqrt() * noise
                }
            })
            .collect();
        for (o, v) in features.row_mut(t).iter_mut().zip(transform.apply(&clean)) {
            *o = v as f32 as f64;
        }
    }
    Utterance {
        id,
        speaker,
        features,
        alignment: ReferenceAlignment(states),
        lattice: None,
    }
}

/// Samples train/cv/adapt splits. Training speakers contribute their first
/// utterances to `train` and the last `cv_utterances_per_speaker` to `cv`;
/// adaptation speakers contribute everything to `adapt`.
pub fn gen_corpus(spec: &CorpusSpec) -> Result<Corpus> {
    spec.validate()?;
    let mut corpus = Corpus {
        num_states: spec.num_states,
        feature_dim: spec.feature_dim,
        train: Vec::new(),
        cv: Vec::new(),
        adapt: Vec::new(),
    };
    let n_train = spec.utterances_per_speaker - spec.cv_utterances_per_speaker;
    for spk in 0..spec.num_speakers + spec.adapt_speakers {
        for u in 0..spec.utterances_per_speaker {
            let utt = gen_utterance(spec, spk, u);
            if spk >= spec.num_speakers {
                corpus.adapt.push(utt);
            } else if u < n_train {
                corpus.train.push(utt);
            } else {
                corpus.cv.push(utt);
            }
        }
    }
    Ok(corpus)
}
