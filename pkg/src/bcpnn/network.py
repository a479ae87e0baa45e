"""Hypercolumn layer with probability-trace learning and connection rewiring.

A layer is H hypercolumns (HCUs) of M minicolumns (MCUs) each.  Every HCU
owns a binary mask selecting which input components it is connected to;
the forward pass is a masked GEMM followed by an independent softmax
inside each HCU, so activations form a probability simplex per HCU.

Learning keeps exponential moving averages of unit and pairwise
activation probabilities (the traces) and derives weights and biases from
them: ``w[i, j] = log(p_joint / (p_in * p_out))`` and ``bias = log p_out``,
with small additive regularisers inside the logs.  Traces are kept dense
for *all* input/unit pairs, including masked-out (silent) connections, so
that structural plasticity can score silent candidates and swap
low-information active connections for high-information silent ones at a
fixed per-HCU connection budget.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

MODEL_FORMAT_VERSION = 1


class GeometryError(ValueError):
    """Invalid layer geometry."""


class ShapeError(ValueError):
    """An input does not match the layer's dimensions."""


class PersistenceError(ValueError):
    """A stored model is corrupt or from another format version."""


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


@dataclass
class LayerGeometry:
    """Shape of a layer: inputs, hypercolumns, minicolumns, mask density.

    ``density`` is the fraction of input components each HCU connects to.
    With ``block_size`` set, the mask is managed in contiguous blocks of
    that many components (one one-hot feature block each), so whole
    features are swapped in and out together; by default the mask is
    managed per component.
    """

    n_inputs: int
    n_hcus: int
    n_mcus: int
    density: float
    block_size: int | None = None

    def __post_init__(self) -> None:
        if min(self.n_inputs, self.n_hcus, self.n_mcus) < 1:
            raise GeometryError(f"all dimensions must be positive: {self}")
        if not 0.0 <= self.density <= 1.0:
            raise GeometryError(f"density must be in [0, 1], got {self.density}")
        if self.block_size is not None:
            if self.block_size < 1 or self.n_inputs % self.block_size:
                raise GeometryError(
                    f"block_size {self.block_size} must divide n_inputs {self.n_inputs}"
                )

    @property
    def n_units(self) -> int:
        return self.n_hcus * self.n_mcus

    @property
    def n_mask_units(self) -> int:
        """Number of independently maskable units (components or blocks)."""
        return self.n_inputs if self.block_size is None else self.n_inputs // self.block_size

    @property
    def active_per_hcu(self) -> int:
        """Mask units active per HCU: round(density * units), >= 1 when d > 0."""
        if self.density == 0.0:
            return 0
        return max(1, _round_half_up(self.density * self.n_mask_units))


@dataclass
class TraceState:
    """EMA probability traces: per-input, per-unit, and dense pairwise."""

    alpha: float
    p_in: np.ndarray  # (n_inputs,)
    p_out: np.ndarray  # (n_units,)
    p_joint: np.ndarray  # (n_inputs, n_units)

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")


@dataclass
class PlasticityReport:
    """Which (removed, added) mask-unit pairs each HCU exchanged."""

    swaps: list = field(default_factory=list)  # per HCU: list of (removed, added)

    @property
    def per_hcu(self) -> list[int]:
        return [len(s) for s in self.swaps]

    @property
    def total(self) -> int:
        return sum(self.per_hcu)


class BcpnnLayer:
    """One trainable layer: mask, traces, and the weights derived from them.

    The layer is mutated by ``update_traces`` / ``recompute_weights`` /
    ``plasticity_step`` during training and is read-only under ``forward``.
    All state lives in ``dtype`` (float32 by default; pass float64 where
    exact arithmetic matters more than speed).
    """

    def __init__(
        self,
        geometry: LayerGeometry,
        mask: np.ndarray,
        traces: TraceState,
        weights: np.ndarray,
        bias: np.ndarray,
        seed: int,
        dtype=np.float32,
    ):
        self.geometry = geometry
        self.mask = mask.astype(bool)
        self.traces = traces
        self.weights = np.asarray(weights, dtype=dtype)
        self.bias = np.asarray(bias, dtype=dtype)
        self.seed = seed
        self.dtype = np.dtype(dtype)
        if self.mask.shape != (geometry.n_hcus, geometry.n_inputs):
            raise ShapeError(f"mask shape {self.mask.shape} does not match {geometry}")
        if self.weights.shape != (geometry.n_inputs, geometry.n_units):
            raise ShapeError(f"weights shape {self.weights.shape} does not match {geometry}")
        self._w_masked = self.weights * self._mask_by_unit()

    # ------------------------------------------------------------------
    # Geometry helpers
    # ------------------------------------------------------------------

    @property
    def n_inputs(self) -> int:
        return self.geometry.n_inputs

    @property
    def n_units(self) -> int:
        return self.geometry.n_units

    def component_mask(self) -> np.ndarray:
        """(n_hcus, n_inputs) bool view of the mask at component granularity."""
        return self.mask

    def _mask_by_unit(self) -> np.ndarray:
        """(n_inputs, n_units) mask in layer dtype: HCU rows fanned out to units."""
        return np.repeat(self.mask.T, self.geometry.n_mcus, axis=1).astype(self.dtype)

    def unit_mask(self) -> np.ndarray:
        """(n_hcus, n_mask_units) bool mask at the plasticity granularity."""
        bs = self.geometry.block_size
        if bs is None:
            return self.mask
        return self.mask.reshape(self.geometry.n_hcus, -1, bs).any(axis=2)

    def _hcu_active_components(self, h: int) -> np.ndarray:
        return np.flatnonzero(self.mask[h])

    def _default_eps(self, eps_joint, eps_marginal):
        a = self.traces.alpha
        ej = a * a if eps_joint is None else eps_joint
        em = a if eps_marginal is None else eps_marginal
        return ej, em

    # ------------------------------------------------------------------
    # Forward
    # ------------------------------------------------------------------

    def forward(self, batch, noise_rng=None, noise_amplitude: float = 0.0) -> np.ndarray:
        """Masked support + per-HCU softmax.

        ``batch`` is (N, n_inputs) (a single 1-D sample is promoted).  The
        optional additive uniform noise on the support is the symmetry
        breaker used during unsupervised training only; inference calls
        leave it off.  Each HCU's activations sum to 1 for every sample.
        """
        x = np.asarray(batch, dtype=self.dtype)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.n_inputs:
            raise ShapeError(f"expected (N, {self.n_inputs}) batch, got {x.shape}")

        support = x @ self._w_masked
        support += self.bias
        if noise_rng is not None and noise_amplitude > 0.0:
            noise = noise_rng.random(support.shape, dtype=np.float32)
            support += noise_amplitude * noise.astype(self.dtype, copy=False)

        g = self.geometry
        support = support.reshape(-1, g.n_hcus, g.n_mcus)
        support -= support.max(axis=2, keepdims=True)
        np.exp(support, out=support)
        support /= support.sum(axis=2, keepdims=True)
        out = support.reshape(-1, self.n_units)
        return out[0] if squeeze else out

    # ------------------------------------------------------------------
    # Learning
    # ------------------------------------------------------------------

    def update_traces(self, batch, activations, alpha: float | None = None) -> TraceState:
        """One EMA step toward the batch-mean observation.

        A whole batch contributes a single EMA step at rate ``alpha``
        (batch-update semantics: the observation is the mean over samples
        of the input, the activation, and their outer product).  Silent
        connections are updated identically; their traces are the shadow
        statistics that structural plasticity scores.
        """
        x = np.atleast_2d(np.asarray(batch, dtype=self.dtype))
        a = np.atleast_2d(np.asarray(activations, dtype=self.dtype))
        if x.shape[1] != self.n_inputs or a.shape[1] != self.n_units or len(x) != len(a):
            raise ShapeError(
                f"batch {x.shape} / activations {a.shape} do not match layer "
                f"({self.n_inputs} inputs, {self.n_units} units)"
            )
        rate = self.traces.alpha if alpha is None else float(alpha)
        n = x.shape[0]

        obs_in = x.mean(axis=0)
        obs_out = a.mean(axis=0)
        obs_joint = x.T @ a
        obs_joint /= n

        keep = self.dtype.type(1.0 - rate)
        gain = self.dtype.type(rate)
        for trace, obs in (
            (self.traces.p_in, obs_in),
            (self.traces.p_out, obs_out),
            (self.traces.p_joint, obs_joint),
        ):
            trace *= keep
            trace += gain * obs
        return self.traces

    def recompute_weights(
        self,
        eps_joint: float | None = None,
        eps_marginal: float | None = None,
        masked_only: bool = False,
    ) -> None:
        """Derive weights and biases from the current traces.

        ``w[i, j] = log((p_joint + eps_joint) / ((p_in + eps_m) * (p_out + eps_m)))``
        and ``bias[j] = log(p_out + eps_m)``.  The defaults are
        ``eps_joint = alpha**2`` and ``eps_marginal = alpha``, which keep the
        logs finite early in training and vanish as traces mature; pass 0
        for the exact independence-maps-to-zero form.

        ``masked_only=True`` refreshes just the entries the forward pass can
        see (plus the bias); the batch loop uses it since silent weights are
        inert.  A full recompute also refreshes silent entries.
        """
        ej, em = self._default_eps(eps_joint, eps_marginal)
        t = self.traces
        g = self.geometry
        log_in = np.log(t.p_in + self.dtype.type(em))
        log_out = np.log(t.p_out + self.dtype.type(em))
        self.bias = log_out.astype(self.dtype, copy=False)

        if not masked_only:
            w = np.log(t.p_joint + self.dtype.type(ej))
            w -= log_in[:, None]
            w -= log_out[None, :]
            self.weights = w
            self._w_masked = w * self._mask_by_unit()
            return

        m = g.n_mcus
        for h in range(g.n_hcus):
            rows = self._hcu_active_components(h)
            if rows.size == 0:
                continue
            cols = slice(h * m, (h + 1) * m)
            block = np.log(t.p_joint[rows, cols] + self.dtype.type(ej))
            block -= log_in[rows][:, None]
            block -= log_out[cols][None, :]
            self.weights[rows, cols] = block
            self._w_masked[rows, cols] = block

    def set_weights(self, weights, bias) -> None:
        """Install explicit weights/bias (tests, surgery); the mask still applies."""
        w = np.asarray(weights, dtype=self.dtype)
        b = np.asarray(bias, dtype=self.dtype)
        if w.shape != self.weights.shape or b.shape != self.bias.shape:
            raise ShapeError(f"weights {w.shape} / bias {b.shape} do not match layer")
        self.weights = w
        self.bias = b
        self._w_masked = w * self._mask_by_unit()

    # ------------------------------------------------------------------
    # Structural plasticity
    # ------------------------------------------------------------------

    def mi_score(
        self,
        input_index: int,
        hcu_index: int,
        eps_joint: float | None = None,
        eps_marginal: float | None = None,
    ) -> float:
        """Information contribution of one input component to one HCU.

        Sum over the HCU's units of ``p_joint * log(p_joint / (p_in * p_out))``
        (with the same regularisers as the weights).  Zero for independent
        traces; invariant to unit order within the HCU.
        """
        ej, em = self._default_eps(eps_joint, eps_marginal)
        t = self.traces
        m = self.geometry.n_mcus
        cols = slice(hcu_index * m, (hcu_index + 1) * m)
        pj = np.asarray(t.p_joint[input_index, cols], dtype=np.float64)
        log_term = (
            np.log(pj + ej)
            - np.log(float(t.p_in[input_index]) + em)
            - np.log(np.asarray(t.p_out[cols], dtype=np.float64) + em)
        )
        return float(np.sum(pj * log_term))

    def mi_scores(
        self, eps_joint: float | None = None, eps_marginal: float | None = None
    ) -> np.ndarray:
        """(n_inputs, n_hcus) matrix of per-component information scores."""
        ej, em = self._default_eps(eps_joint, eps_marginal)
        t = self.traces
        g = self.geometry
        log_term = np.log(t.p_joint + self.dtype.type(ej))
        log_term -= np.log(t.p_in + self.dtype.type(em))[:, None]
        log_term -= np.log(t.p_out + self.dtype.type(em))[None, :]
        contrib = t.p_joint * log_term
        return contrib.reshape(g.n_inputs, g.n_hcus, g.n_mcus).sum(axis=2)

    def _unit_scores(self) -> np.ndarray:
        """Scores at plasticity granularity: components, or summed blocks."""
        s = self.mi_scores()
        bs = self.geometry.block_size
        if bs is None:
            return s
        return s.reshape(-1, bs, self.geometry.n_hcus).sum(axis=1)

    def plasticity_step(self, max_swaps: int | None = None) -> PlasticityReport:
        """Exchange low-scoring active connections for high-scoring silent ones.

        Per HCU, up to ``max_swaps`` (default 1% of the active budget,
        at least 1) lowest-scoring active units are exchanged against the
        highest-scoring silent ones, each swap only when the silent
        candidate's score strictly exceeds the active one's.  The active
        count per HCU is conserved and every swap strictly increases the
        HCU's total score, so zero swaps is a normal outcome.
        """
        g = self.geometry
        report = PlasticityReport(swaps=[[] for _ in range(g.n_hcus)])
        active_per_hcu = g.active_per_hcu
        if active_per_hcu == 0 or active_per_hcu == g.n_mask_units:
            return report
        if max_swaps is None:
            max_swaps = max(1, _round_half_up(0.01 * active_per_hcu))

        scores = self._unit_scores()
        unit_mask = self.unit_mask()
        bs = self.geometry.block_size
        changed = False
        for h in range(g.n_hcus):
            act = np.flatnonzero(unit_mask[h])
            sil = np.flatnonzero(~unit_mask[h])
            act_order = act[np.argsort(scores[act, h], kind="stable")]
            sil_order = sil[np.argsort(-scores[sil, h], kind="stable")]
            for k in range(min(max_swaps, act.size, sil.size)):
                worst, best = act_order[k], sil_order[k]
                if not scores[best, h] > scores[worst, h]:
                    break
                if bs is None:
                    self.mask[h, worst] = False
                    self.mask[h, best] = True
                else:
                    self.mask[h, worst * bs : (worst + 1) * bs] = False
                    self.mask[h, best * bs : (best + 1) * bs] = True
                report.swaps[h].append((int(worst), int(best)))
                changed = True

        if changed:
            # Newly activated entries need weights; newly silenced go inert.
            self._w_masked = self.weights * self._mask_by_unit()
            self.recompute_weights(masked_only=True)
        return report

    def total_active_score(self) -> float:
        """Sum of information scores over all active connections (all HCUs)."""
        scores = self._unit_scores()
        return float(sum(scores[self.unit_mask()[h], h].sum() for h in range(self.geometry.n_hcus)))

    # ------------------------------------------------------------------
    # Persistence
    # ------------------------------------------------------------------

    def save(self, path, meta: dict | None = None) -> None:
        """Persist the full layer state; round-trips exactly."""
        self.recompute_weights()
        g = self.geometry
        np.savez_compressed(
            path,
            format_version=MODEL_FORMAT_VERSION,
            n_inputs=g.n_inputs,
            n_hcus=g.n_hcus,
            n_mcus=g.n_mcus,
            density=g.density,
            block_size=-1 if g.block_size is None else g.block_size,
            mask=self.mask.astype(np.uint8),
            alpha=self.traces.alpha,
            p_in=self.traces.p_in,
            p_out=self.traces.p_out,
            p_joint=self.traces.p_joint,
            weights=self.weights,
            bias=self.bias,
            seed=self.seed,
            dtype=str(self.dtype),
            meta=json.dumps(meta or {}),
        )

    @classmethod
    def load(cls, path) -> tuple["BcpnnLayer", dict]:
        """Load a layer saved by :meth:`save`; returns (layer, meta)."""
        try:
            doc = np.load(path, allow_pickle=False)
        except (OSError, ValueError) as exc:
            raise PersistenceError(f"cannot read model at {path}: {exc}") from None
        with doc:
            if "format_version" not in doc or int(doc["format_version"]) != MODEL_FORMAT_VERSION:
                raise PersistenceError(f"unsupported model format at {path}")
            block = int(doc["block_size"])
            geometry = LayerGeometry(
                n_inputs=int(doc["n_inputs"]),
                n_hcus=int(doc["n_hcus"]),
                n_mcus=int(doc["n_mcus"]),
                density=float(doc["density"]),
                block_size=None if block < 0 else block,
            )
            dtype = np.dtype(str(doc["dtype"]))
            traces = TraceState(
                alpha=float(doc["alpha"]),
                p_in=doc["p_in"].astype(dtype, copy=True),
                p_out=doc["p_out"].astype(dtype, copy=True),
                p_joint=doc["p_joint"].astype(dtype, copy=True),
            )
            layer = cls(
                geometry=geometry,
                mask=doc["mask"].astype(bool),
                traces=traces,
                weights=doc["weights"],
                bias=doc["bias"],
                seed=int(doc["seed"]),
                dtype=dtype,
            )
            meta = json.loads(str(doc["meta"]))
        return layer, meta


def init_layer(
    geometry: LayerGeometry,
    seed: int,
    input_rate: float = 0.1,
    alpha: float = 1e-3,
    dtype=np.float32,
) -> BcpnnLayer:
    """Fresh layer: random sparse mask, independence-initialised traces.

    Each HCU activates exactly ``geometry.active_per_hcu`` mask units chosen
    uniformly at random under ``seed``.  Traces start interior and
    independent -- ``p_in = input_rate`` (the expected input activation,
    1/n_bins for one-hot encoded data), ``p_out = 1/n_mcus``, and
    ``p_joint`` their product -- so the derived weights start at exactly
    zero and the forward pass is uniform within every HCU.
    """
    if not 0.0 < input_rate < 1.0:
        raise GeometryError(f"input_rate must be in (0, 1), got {input_rate}")
    dtype = np.dtype(dtype)
    rng = np.random.default_rng(seed)
    g = geometry

    mask = np.zeros((g.n_hcus, g.n_inputs), dtype=bool)
    active = g.active_per_hcu
    bs = g.block_size
    for h in range(g.n_hcus):
        chosen = rng.choice(g.n_mask_units, size=active, replace=False)
        if bs is None:
            mask[h, chosen] = True
        else:
            for b in chosen:
                mask[h, b * bs : (b + 1) * bs] = True

    p_in = np.full(g.n_inputs, input_rate, dtype=dtype)
    p_out = np.full(g.n_units, 1.0 / g.n_mcus, dtype=dtype)
    p_joint = np.outer(p_in, p_out).astype(dtype)
    traces = TraceState(alpha=alpha, p_in=p_in, p_out=p_out, p_joint=p_joint)

    layer = BcpnnLayer(
        geometry=g,
        mask=mask,
        traces=traces,
        weights=np.zeros((g.n_inputs, g.n_units), dtype=dtype),
        bias=np.log(p_out + dtype.type(traces.alpha)),
        seed=seed,
        dtype=dtype,
    )
    return layer
