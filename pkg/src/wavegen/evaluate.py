"""Scores conditional generation with a spectral nearest-prototype classifier.

Each class gets a prototype: the mean power spectrum of its real clips.
A clip is assigned to the prototype with the highest cosine similarity.
Power spectra ignore phase and amplitude scaling (cosine similarity is
scale-free), so the classifier keys on which frequencies carry energy,
which is exactly what separates the tone classes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio import Corpus
from .nets import GeneratorParams, ModelConfig, synthesize


def power_spectra(x: np.ndarray) -> np.ndarray:
    """(n, length) waveforms to (n, length//2 + 1) power spectra."""
    return np.abs(np.fft.rfft(x.astype(np.float64), axis=-1)) ** 2


def class_prototypes(corpus: Corpus) -> np.ndarray:
    spectra = power_spectra(corpus.x)
    return np.stack([
        spectra[corpus.labels == k].mean(axis=0) for k in range(corpus.num_classes)
    ])


def classify(clips: np.ndarray, prototypes: np.ndarray) -> np.ndarray:
    spectra = power_spectra(clips)
    norms = np.linalg.norm(spectra, axis=1, keepdims=True)
    proto_norms = np.linalg.norm(prototypes, axis=1, keepdims=True)
    sims = (spectra / np.maximum(norms, 1e-300)) @ (prototypes / proto_norms).T
    return np.argmax(sims, axis=1)


@dataclass(frozen=True)
class EvalReport:
    per_class: tuple
    overall: float
    n_per_class: int
    class_names: tuple

    def lines(self):
        for name, acc in zip(self.class_names, self.per_class):
            yield f"{name}: {acc:.3f}"
        yield f"overall: {self.overall:.3f} ({self.n_per_class} clips per class)"


def eval_fidelity(gen: GeneratorParams, cfg: ModelConfig, corpus: Corpus,
                  n_per_class: int, rng: np.random.Generator) -> EvalReport:
    """Fraction of generated clips the prototype classifier assigns back
    to the label they were conditioned on."""
    if corpus.num_classes < 2:
        raise ValueError(
            f"evaluation needs at least 2 classes, corpus has {corpus.num_classes}"
        )
    if corpus.num_classes != cfg.num_classes:
        raise ValueError(
            f"corpus has {corpus.num_classes} classes, model expects {cfg.num_classes}"
        )
    prototypes = class_prototypes(corpus)
    per_class = []
    for k in range(cfg.num_classes):
        labels = np.full(n_per_class, k, dtype=np.int64)
        clips = synthesize(gen, labels, cfg, rng)[:, :, 0]
        per_class.append(float(np.mean(classify(clips, prototypes) == k)))
    overall = float(np.mean(per_class))
    return EvalReport(tuple(per_class), overall, n_per_class, corpus.class_names)
