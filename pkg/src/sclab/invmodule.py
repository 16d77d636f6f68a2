"""Inventory module: learn attention weights that map supplied products to consumed inputs.

Each firm keeps a non-negative inventory over products. Purchases add to it and
supplying ``k`` units of ``p`` consumes ``alpha[p, q] * k`` of every ``q``. The
inventory loss penalizes consumption beyond current stock (debt) and rewards
consumption otherwise, which makes ``alpha`` approximate the unit requirements
of the hidden production functions.

Orientation throughout: ``alpha[product, part]``.
"""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field

import numpy as np

from .core import CONSUMER, Dataset

log = logging.getLogger(__name__)


class DivergenceError(FloatingPointError):
    pass


class ContractError(ValueError):
    pass


@dataclass(frozen=True)
class InvTrainConfig:
    lambda_debt: float = 5.0
    lambda_cons: float = 4.0
    lambda_l2: float = 4.0
    learning_rate: float = 0.001
    epochs: int = 100
    patience: int = 10
    seed: int = 0
    gradient_mode: str = "one-step"
    mode: str = "direct"
    init: float = 0.1

    def __post_init__(self):
        if min(self.lambda_debt, self.lambda_cons, self.lambda_l2) < 0:
            raise ValueError("loss weights must be non-negative")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.gradient_mode not in ("one-step", "full-unroll"):
            raise ValueError(f"unknown gradient_mode {self.gradient_mode!r}")
        if self.mode not in ("direct", "bilinear"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.lambda_debt <= self.lambda_cons:
            log.warning("lambda_debt <= lambda_cons: debt is never net-penalized; weights may grow without bound")


@dataclass
class AttentionWeights:
    """Direct: ``alpha = relu(w_raw)``. Bilinear: ``alpha = relu(z @ w_att @ z.T + nu)``."""

    mode: str
    w_raw: np.ndarray | None = None
    w_att: np.ndarray | None = None
    nu: np.ndarray | None = None
    z: np.ndarray | None = None

    @classmethod
    def direct(cls, m: int, init: float = 0.1) -> "AttentionWeights":
        return cls("direct", w_raw=np.full((m, m), float(init)))

    @classmethod
    def bilinear(cls, z: np.ndarray, init: float = 0.1) -> "AttentionWeights":
        z = np.asarray(z, dtype=float)
        m, d = z.shape
        return cls("bilinear", w_att=np.zeros((d, d)), nu=np.full((m, m), float(init)), z=z)

    @classmethod
    def fixed(cls, alpha: np.ndarray) -> "AttentionWeights":
        """Non-trainable weights, e.g. the ground-truth units matrix."""
        return cls("direct", w_raw=np.array(alpha, dtype=float))

    @property
    def m(self) -> int:
        return (self.w_raw if self.mode == "direct" else self.nu).shape[0]

    def pre_activation(self) -> np.ndarray:
        if self.mode == "direct":
            return self.w_raw
        return self.z @ self.w_att @ self.z.T + self.nu

    @property
    def alpha(self) -> np.ndarray:
        return np.maximum(self.pre_activation(), 0.0)

    def adjustment_norm(self) -> float:
        return 0.0 if self.mode == "direct" else float(np.linalg.norm(self.nu))

    def copy(self) -> "AttentionWeights":
        cp = lambda a: None if a is None else a.copy()  # noqa: E731
        return AttentionWeights(self.mode, cp(self.w_raw), cp(self.w_att), cp(self.nu), cp(self.z))

    def apply_gradient(self, grad_alpha: np.ndarray, lr: float, lambda_l2: float) -> None:
        """One subgradient step given dL/dalpha; ReLU and norm kinks take subgradient 0."""
        live = self.pre_activation() > 0
        # overflow surfaces as non-finite weights, which the trainer reports as divergence
        with np.errstate(over="ignore", invalid="ignore"):
            g = grad_alpha * live
            if self.mode == "direct":
                self.w_raw -= lr * g
                return
            norm = np.linalg.norm(self.nu)
            g_nu = g + (lambda_l2 * self.nu / norm if norm > 0 else 0.0)
            g_w = self.z.T @ g @ self.z
            self.nu -= lr * g_nu
            self.w_att -= lr * g_w


@dataclass
class InventoryState:
    """Inventory matrix ``x[firm, product]`` as of the start of timestep ``t``."""

    x: np.ndarray
    t: int

    @classmethod
    def empty(cls, n: int, m: int, t: int = 0) -> "InventoryState":
        return cls(np.zeros((n, m)), t)


def buy_totals(dataset: Dataset, t: int, firm: int) -> np.ndarray:
    """Units of each product bought by ``firm`` at timestep ``t``."""
    sl = dataset.rows_at(t)
    mask = dataset.buyer[sl] == firm
    return np.bincount(dataset.product[sl][mask], weights=dataset.amount[sl][mask], minlength=dataset.n_products)


def supply_totals(dataset: Dataset, t: int, firm: int) -> np.ndarray:
    sl = dataset.rows_at(t)
    mask = dataset.supplier[sl] == firm
    return np.bincount(dataset.product[sl][mask], weights=dataset.amount[sl][mask], minlength=dataset.n_products)


def consumption_totals(dataset: Dataset, t: int, alpha: np.ndarray, firm: int) -> np.ndarray:
    """Units of each product consumed by ``firm`` at ``t`` to make what it supplied."""
    return supply_totals(dataset, t, firm) @ alpha


def update_inventory(x: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    return np.maximum(0.0, x + b - c)


@dataclass
class StepMatrices:
    """Per-timestep dense buy and supply totals, shape ``(n_firms, n_products)``."""

    timesteps: np.ndarray
    buys: list[np.ndarray]
    supplies: list[np.ndarray]
    n: int
    m: int

    @classmethod
    def from_dataset(cls, dataset: Dataset) -> "StepMatrices":
        n, m = dataset.n_firms, dataset.n_products
        steps = dataset.timesteps()
        buys, supplies = [], []
        for t in steps.tolist():
            sl = dataset.rows_at(t)
            s, b, p, a = dataset.supplier[sl], dataset.buyer[sl], dataset.product[sl], dataset.amount[sl]
            S = np.zeros((n, m))
            np.add.at(S, (s, p), a)
            B = np.zeros((n, m))
            firm = b != CONSUMER
            np.add.at(B, (b[firm], p[firm]), a[firm])
            buys.append(B)
            supplies.append(S)
        return cls(steps, buys, supplies, n, m)


def step_loss(x: np.ndarray, supplies: np.ndarray, alpha: np.ndarray, config: InvTrainConfig,
              adjustment_norm: float = 0.0) -> float:
    n = x.shape[0]
    cons = supplies @ alpha
    debt = np.maximum(0.0, cons - x)
    return float((config.lambda_debt * debt.sum() - config.lambda_cons * cons.sum()) / n
                 + config.lambda_l2 * adjustment_norm)


def inventory_loss_step(state: InventoryState, dataset: Dataset, t: int, weights: AttentionWeights,
                        config: InvTrainConfig) -> float:
    """Inventory loss at timestep ``t`` for every firm, averaged over ``n_firms``."""
    if state.t != t:
        raise ContractError(f"inventory reflects t={state.t}, loss requested for t={t}")
    n, m = dataset.n_firms, dataset.n_products
    sl = dataset.rows_at(t)
    S = np.zeros((n, m))
    np.add.at(S, (dataset.supplier[sl], dataset.product[sl]), dataset.amount[sl])
    return step_loss(state.x, S, weights.alpha, config, weights.adjustment_norm())


def step_gradient(x: np.ndarray, supplies: np.ndarray, alpha: np.ndarray, config: InvTrainConfig,
                  dx_dalpha: np.ndarray | None = None) -> np.ndarray:
    """Subgradient of the step loss with respect to ``alpha`` (regularizer excluded).

    ``dx_dalpha[i, q, a]`` is the sensitivity of ``x[i, q]`` to ``alpha[a, q]``;
    inventory of ``q`` only depends on column ``q``. ``None`` treats ``x`` as constant.
    """
    n = x.shape[0]
    cons = supplies @ alpha
    debt_active = (cons > x).astype(float)
    coef = config.lambda_debt * debt_active - config.lambda_cons
    grad = supplies.T @ coef / n
    if dx_dalpha is not None:
        # d/dalpha[a, q] of -lambda_debt * x[i, q] over firms in debt on q
        grad -= config.lambda_debt * np.einsum("iq,iqa->aq", debt_active, dx_dalpha) / n
    return grad


def advance(x: np.ndarray, buys: np.ndarray, supplies: np.ndarray, alpha: np.ndarray,
            dx_dalpha: np.ndarray | None = None):
    """Inventory recursion, optionally carrying its sensitivity to ``alpha``."""
    pre = x + buys - supplies @ alpha
    x_next = np.maximum(0.0, pre)
    if dx_dalpha is None:
        return x_next, None
    live = (pre > 0)[:, :, None]
    d_next = (dx_dalpha - supplies[:, None, :]) * live
    return x_next, d_next


@dataclass
class TrainResult:
    weights: AttentionWeights
    epoch_losses: list[float] = field(default_factory=list)
    stopped_early: bool = False


def train_inventory(train: Dataset, m: int | None = None, config: InvTrainConfig | None = None,
                    embeddings: np.ndarray | None = None, weights: AttentionWeights | None = None,
                    callback=None) -> TrainResult:
    """Subgradient descent on the inventory loss, one update per timestep.

    Inventories restart from zero every epoch. Training stops when the epoch loss
    has not improved for ``patience`` epochs; the final weights are returned.
    """
    config = config or InvTrainConfig()
    if len(train) == 0:
        raise ValueError("training split is empty")
    m = m or train.n_products
    if weights is None:
        if config.mode == "bilinear":
            if embeddings is None:
                raise ValueError("bilinear mode requires product embeddings")
            if embeddings.shape[0] != m:
                raise ValueError(f"embeddings cover {embeddings.shape[0]} products, expected {m}")
            weights = AttentionWeights.bilinear(embeddings, config.init)
        else:
            weights = AttentionWeights.direct(m, config.init)
    steps = StepMatrices.from_dataset(train)
    unroll = config.gradient_mode == "full-unroll"
    result = TrainResult(weights)
    best, stale = np.inf, 0
    for epoch in range(config.epochs):
        x = np.zeros((steps.n, steps.m))
        dx = np.zeros((steps.n, steps.m, steps.m)) if unroll else None
        total = 0.0
        for B, S in zip(steps.buys, steps.supplies):
            alpha = weights.alpha
            total += step_loss(x, S, alpha, config, weights.adjustment_norm())
            grad = step_gradient(x, S, alpha, config, dx)
            x, dx = advance(x, B, S, alpha, dx)
            weights.apply_gradient(grad, config.learning_rate, config.lambda_l2)
        if not np.isfinite(total) or not np.all(np.isfinite(weights.pre_activation())):
            raise DivergenceError(f"non-finite inventory loss in epoch {epoch}; try a smaller learning_rate")
        result.epoch_losses.append(total)
        if callback is not None:
            callback(epoch, total, weights)
        log.debug("epoch %d loss %.6g", epoch, total)
        if not np.isfinite(best) or total < best - 1e-12 * max(1.0, abs(best)):
            best, stale = total, 0
        else:
            stale += 1
            if stale >= config.patience:
                result.stopped_early = True
                break
    return result


def rank_parts(alpha: np.ndarray, product: int) -> list[tuple[int, float]]:
    """Every other product ordered by weight descending, ties by ascending id."""
    row = np.asarray(alpha)[product]
    cand = np.array([q for q in range(len(row)) if q != product], dtype=int)
    order = np.lexsort((cand, -row[cand]))
    return [(int(cand[i]), float(row[cand[i]])) for i in order]


class InventoryTracker:
    """Replays observed transactions to keep ``InventoryState`` at the start of a timestep."""

    def __init__(self, dataset: Dataset, alpha: np.ndarray):
        self.dataset = dataset
        self.alpha = np.asarray(alpha, dtype=float)
        self.state = InventoryState.empty(dataset.n_firms, dataset.n_products,
                                          int(dataset.t[0]) if len(dataset) else 0)
        self._steps = dataset.timesteps()

    def advance_to(self, t: int) -> InventoryState:
        if t < self.state.t:
            raise ContractError(f"cannot rewind inventory from t={self.state.t} to t={t}")
        ds = self.dataset
        n, m = ds.n_firms, ds.n_products
        for s in self._steps[(self._steps >= self.state.t) & (self._steps < t)].tolist():
            sl = ds.rows_at(s)
            S = np.zeros((n, m))
            np.add.at(S, (ds.supplier[sl], ds.product[sl]), ds.amount[sl])
            B = np.zeros((n, m))
            firm = ds.buyer[sl] != CONSUMER
            np.add.at(B, (ds.buyer[sl][firm], ds.product[sl][firm]), ds.amount[sl][firm])
            self.state.x = update_inventory(self.state.x, B, S @ self.alpha)
        self.state.t = t
        return self.state


def _check_time(state: InventoryState, t: int) -> None:
    if state.t != t:
        raise ContractError(f"inventory reflects t={state.t}; penalties only apply at that timestep, not t={t}")


def penalty(s: int, b: int, p: int, t: int, alpha: np.ndarray, state: InventoryState) -> float:
    """Non-positive score adjustment: shortfall of supplier stock against one unit of ``p``."""
    _check_time(state, t)
    return -float(np.maximum(0.0, alpha[p] - state.x[s]).sum())


def cap(s: int, b: int, p: int, t: int, alpha: np.ndarray, state: InventoryState) -> float:
    """Most units of ``p`` the supplier could make from stock; ``inf`` if ``p`` needs no parts."""
    _check_time(state, t)
    row = alpha[p]
    need = row > 0
    if not need.any():
        return float("inf")
    return float(np.min(state.x[s, need] / row[need]))


def adjust_scores(candidates, alpha: np.ndarray, state: InventoryState, scaler=None):
    """Add penalties to existence scores and cap predicted amounts.

    ``candidates`` holds ``(s, b, p, t, score, amount)`` rows; ``amount`` is on the
    scaler's scale when a scaler is given, and the cap is scaled the same way.
    """
    out = []
    for s, b, p, t, score, amount in candidates:
        new_score = score + penalty(s, b, p, t, alpha, state)
        c = cap(s, b, p, t, alpha, state)
        if amount is not None and np.isfinite(c):
            if scaler is not None:
                c = scaler.scale(c) if c > 0 else -np.inf
            amount = min(amount, c)
        out.append((s, b, p, t, new_score, amount))
    return out


def save_weights(weights: AttentionWeights, path: str | os.PathLike) -> None:
    """Dense ``alpha`` as whitespace-delimited text, one product row per line."""
    np.savetxt(path, weights.alpha, fmt="%.17g")


def load_alpha(path: str | os.PathLike) -> np.ndarray:
    alpha = np.loadtxt(path, ndmin=2)
    if alpha.shape[0] != alpha.shape[1]:
        raise ValueError(f"{path}: expected a square matrix, got {alpha.shape}")
    return alpha


def load_embeddings(path: str | os.PathLike, m: int | None = None) -> np.ndarray:
    """Comma-delimited ``product_id, e1, ..., ed`` rows (optional header); returns an ``(m, d)`` array."""
    rows = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            fields = [f.strip() for f in line.strip().split(",")]
            if not fields or not fields[0]:
                continue
            try:
                pid = int(fields[0])
            except ValueError:
                if lineno == 1:
                    continue
                raise ValueError(f"{path}:{lineno}: bad product id {fields[0]!r}") from None
            rows[pid] = [float(v) for v in fields[1:]]
    m = m if m is not None else max(rows) + 1
    dims = {len(v) for v in rows.values()}
    if len(dims) != 1:
        raise ValueError(f"{path}: rows have differing widths {sorted(dims)}")
    missing = [p for p in range(m) if p not in rows]
    if missing:
        raise ValueError(f"{path}: no embedding for products {missing[:5]}")
    return np.array([rows[p] for p in range(m)])


def save_ranking_report(alpha: np.ndarray, path: str | os.PathLike, top_k: int = 5) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("product,rank,part,weight\n")
        for p in range(alpha.shape[0]):
            for r, (q, w) in enumerate(rank_parts(alpha, p)[:top_k], start=1):
                fh.write(f"{p},{r},{q},{w!r}\n")
