"""Multi-task objective machinery: masked losses, the trace-coupled
regularizer, task-covariance updates, and task-index alignment.

Each client k keeps a covariance `omega` over the union of task ids visible
in its neighborhood, constrained to be symmetric PSD with unit trace.  The
task head is regularized by Tr(Phi B Phi^T) where B is an inverse covariance,
which ties columns of related tasks together.  Covariances of differently
shaped neighbors are reconciled by embedding them at their global task
positions (`align_to_global`) and extracting the needed block back out.

Inverses are always taken as (omega + eps I)^-1; closed-form covariances can
be singular when task columns coincide, and the ridge keeps gradients finite.
Neighbor inverse couplings are inverted in the neighbor's own task space and
then aligned, so tasks a neighbor has never seen contribute no penalty
instead of a 1/eps one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import (
    AlignmentError,
    DegenerateInputError,
    TopologyError,
    ValidationError,
)
from .linalg import as_matrix, require_symmetric, sym_eig


@dataclass
class TaskCovariance:
    """Unit-trace PSD covariance over an ordered set of global task ids."""

    omega: np.ndarray
    task_index_map: tuple[int, ...]

    def __post_init__(self):
        self.omega = as_matrix(self.omega, "omega")
        self.task_index_map = tuple(int(t) for t in self.task_index_map)
        if len(set(self.task_index_map)) != len(self.task_index_map):
            raise ValidationError("task_index_map has duplicate global ids")
        if self.omega.shape != (len(self.task_index_map),) * 2:
            raise ValidationError(
                f"omega shape {self.omega.shape} does not match {len(self.task_index_map)} tasks"
            )

    @property
    def size(self) -> int:
        return self.omega.shape[0]

    def validate(self, tol: float = 1e-10) -> None:
        require_symmetric(self.omega, tol, "omega")
        w, _ = sym_eig(self.omega)
        if w[-1] < -tol:
            raise ValidationError(f"omega is not PSD: min eigenvalue {w[-1]:.3e}")
        tr = float(np.trace(self.omega))
        if abs(tr - 1.0) > tol:
            raise ValidationError(f"omega trace {tr} != 1")


@dataclass
class MtlConfig:
    lambda1: float = 0.001
    lambda_chi: dict[str, float] = field(
        default_factory=lambda: {"theta": 0.0, "psi": 0.0, "phi_pool": 0.0, "phi_task": 0.0}
    )
    omega_lr: float = 1.0
    epsilon_psd: float = 1e-6
    literal_weights: bool = False

    def validate(self) -> None:
        if not np.isfinite(self.lambda1) or self.lambda1 < 0:
            raise ValidationError("lambda1 must be finite and non-negative")
        for group, lam in self.lambda_chi.items():
            if not np.isfinite(lam) or lam < 0:
                raise ValidationError(f"lambda_chi[{group}] must be finite and non-negative")
        if self.omega_lr <= 0:
            raise ValidationError("omega_lr must be positive")


def initial_covariance(task_ids) -> TaskCovariance:
    """Maximum-entropy start: identity over the union, scaled to unit trace."""
    ids = tuple(sorted(int(t) for t in task_ids))
    n = len(ids)
    return TaskCovariance(omega=np.eye(n) / n, task_index_map=ids)


# ---------------------------------------------------------------------------
# losses and the regularizer (on tape)
# ---------------------------------------------------------------------------


def masked_loss(predictions, label: np.ndarray, mask: np.ndarray, task_type: str) -> "ad.Var":
    """Per-sample loss averaged over unmasked tasks; 0 when fully masked."""
    if task_type == "classification":
        return ad.bce_with_logits_masked(predictions, label, mask)
    if task_type == "regression":
        return ad.squared_error_masked(predictions, label, mask)
    raise ValidationError(f"unknown task type {task_type!r}")


def omega_inverse(omega: np.ndarray, epsilon: float) -> np.ndarray:
    """(omega + eps I)^-1 through the symmetric eigendecomposition."""
    w, v = sym_eig(omega)
    if w[-1] < -1e-8:
        raise ValidationError(f"omega is not PSD: min eigenvalue {w[-1]:.3e}")
    return v @ np.diag(1.0 / (w + epsilon)) @ v.T


def regularizer_value(params: dict[str, "ad.Var"], groups: dict[str, str],
                      omega: TaskCovariance, cfg: MtlConfig) -> "ad.Var":
    """0.5 * lambda1 * Tr(Phi inv(omega) Phi^T) + 0.5 * sum lambda_chi ||chi||_F^2."""
    head = params["head/task"]
    if head.shape[1] != omega.size:
        raise AlignmentError(
            f"task head has {head.shape[1]} columns but omega covers {omega.size} tasks"
        )
    tape = head.tape
    total = tape.const(np.zeros((1, 1)))
    if cfg.lambda1 > 0:
        inv = omega_inverse(omega.omega, cfg.epsilon_psd)
        total = ad.add(total, ad.scale(ad.quad_trace(head, inv), 0.5 * cfg.lambda1))
    total = ad.add(total, frobenius_penalty(params, groups, cfg))
    return total


def frobenius_penalty(params: dict[str, "ad.Var"], groups: dict[str, str], cfg: MtlConfig) -> "ad.Var":
    tape = next(iter(params.values())).tape
    total = tape.const(np.zeros((1, 1)))
    for name, var in params.items():
        lam = cfg.lambda_chi.get(groups[name], 0.0)
        if lam > 0:
            total = ad.add(total, ad.scale(ad.frobenius_sq(var), 0.5 * lam))
    return total


# ---------------------------------------------------------------------------
# neighborhood coupling (Ω-side of the alternating optimization)
# ---------------------------------------------------------------------------


def neighborhood_weights(sample_counts, literal: bool) -> list[float]:
    """1/N_i weights, normalized to sum to one unless literal mode is on."""
    raw = [1.0 / float(n) for n in sample_counts]
    if literal:
        return raw
    total = sum(raw)
    return [w / total for w in raw]


def coupling_matrices(
    own_union: tuple[int, ...],
    neighborhood: list[tuple[TaskCovariance, int]],
    cfg: MtlConfig,
) -> list[tuple[np.ndarray, float]]:
    """Weighted inverse-covariance blocks aligned to the client's task union.

    `neighborhood` lists (covariance, sample_count) for every member of
    M_k including the client itself.
    """
    if not neighborhood:
        raise TopologyError("empty neighborhood")
    weights = neighborhood_weights([n for _, n in neighborhood], cfg.literal_weights)
    own = tuple(int(t) for t in own_union)
    out = []
    for (cov, _), w in zip(neighborhood, weights):
        inv = omega_inverse(cov.omega, cfg.epsilon_psd)
        if cov.task_index_map == own:
            block = inv
        else:
            pos = {t: i for i, t in enumerate(cov.task_index_map)}
            block = np.zeros((len(own), len(own)))
            rows = [(i, pos[t]) for i, t in enumerate(own) if t in pos]
            for i, pi in rows:
                for j, pj in rows:
                    block[i, j] = inv[pi, pj]
        out.append((block, w))
    return out


def neighborhood_regularizer(
    params: dict[str, "ad.Var"],
    groups: dict[str, str],
    couplings: list[tuple[np.ndarray, float]],
    cfg: MtlConfig,
) -> "ad.Var":
    """0.5 * lambda1 * sum_i w_i Tr(Phi B_i Phi^T) plus Frobenius terms."""
    head = params["head/task"]
    tape = head.tape
    total = tape.const(np.zeros((1, 1)))
    if cfg.lambda1 > 0:
        for block, w in couplings:
            total = ad.add(total, ad.scale(ad.quad_trace(head, block), 0.5 * cfg.lambda1 * w))
    total = ad.add(total, frobenius_penalty(params, groups, cfg))
    return total


def grad_task_head(
    dl_dphi: np.ndarray,
    phi_task_union: np.ndarray,
    couplings: list[tuple[np.ndarray, float]],
    cfg: MtlConfig,
) -> np.ndarray:
    """Analytic head gradient: dL/dPhi + lambda1 sum_i w_i Phi B_i + lambda2 Phi."""
    phi = as_matrix(phi_task_union, "task head")
    grad = np.array(dl_dphi, dtype=np.float64)
    if grad.shape != phi.shape:
        raise AlignmentError(f"loss gradient {grad.shape} does not match head {phi.shape}")
    for block, w in couplings:
        if block.shape != (phi.shape[1], phi.shape[1]):
            raise AlignmentError("coupling block does not match the head's task union")
        grad = grad + cfg.lambda1 * w * (phi @ block)
    lam2 = cfg.lambda_chi.get("phi_task", 0.0)
    if lam2 > 0:
        grad = grad + lam2 * phi
    return grad


# ---------------------------------------------------------------------------
# covariance updates
# ---------------------------------------------------------------------------


def psd_sqrt(a: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root V diag(max(w,0))^1/2 V^T."""
    a = as_matrix(a, "psd_sqrt input")
    require_symmetric(a, 1e-8, "psd_sqrt input")
    w, v = sym_eig(a)
    return v @ np.diag(np.sqrt(np.maximum(w, 0.0))) @ v.T


def omega_closed_form(phi_task_union: np.ndarray, task_ids) -> TaskCovariance:
    """The fixed-Phi minimizer (Phi^T Phi)^1/2 / Tr((Phi^T Phi)^1/2)."""
    phi = as_matrix(phi_task_union, "task head")
    gram = phi.T @ phi
    root = psd_sqrt(0.5 * (gram + gram.T))
    tr = float(np.trace(root))
    if tr <= 1e-300:
        raise DegenerateInputError("task head is zero; covariance undefined")
    return TaskCovariance(omega=root / tr, task_index_map=tuple(task_ids))


def align_to_global(local: TaskCovariance, global_task_count: int) -> np.ndarray:
    """Embed a local covariance at its global (row, col) positions."""
    ids = local.task_index_map
    for t in ids:
        if not 0 <= t < global_task_count:
            raise ValidationError(f"task id {t} outside global range {global_task_count}")
    out = np.zeros((global_task_count, global_task_count))
    out[np.ix_(ids, ids)] = local.omega
    return out


def extract_from_global(aligned: np.ndarray, task_ids) -> np.ndarray:
    ids = list(task_ids)
    return aligned[np.ix_(ids, ids)].copy()


def project_covariance(a: np.ndarray, epsilon: float) -> np.ndarray:
    """Symmetrize, clamp eigenvalues at epsilon, renormalize trace to 1."""
    sym = 0.5 * (as_matrix(a) + as_matrix(a).T)
    w, v = sym_eig(sym)
    w = np.maximum(w, epsilon)
    out = v @ np.diag(w) @ v.T
    out = 0.5 * (out + out.T)
    return out / float(np.trace(out))


def omega_decentralized_update(
    own: TaskCovariance,
    neighbor_omegas: list[tuple[TaskCovariance, int]],
    phi_task_union: np.ndarray,
    cfg: MtlConfig,
    global_task_count: int,
) -> TaskCovariance:
    """Exchange-round covariance update in globally aligned coordinates.

    The client's own contribution enters through the closed-form term built
    from its current head; `neighbor_omegas` lists the other members of the
    neighborhood with their sample counts.  The raw combination is scaled by
    omega_lr / |M_k| and then projected back onto the constraint set, which
    the unprojected rule does not preserve on its own.
    """
    if own.size == 0:
        raise TopologyError("own covariance is empty")
    acc = np.zeros((global_task_count, global_task_count))
    if neighbor_omegas:
        weights = neighborhood_weights([n for _, n in neighbor_omegas], cfg.literal_weights)
        for (cov, _), w in zip(neighbor_omegas, weights):
            acc += w * align_to_global(cov, global_task_count)
    closed = omega_closed_form(phi_task_union, own.task_index_map)
    acc += align_to_global(closed, global_task_count)
    acc *= cfg.omega_lr / (len(neighbor_omegas) + 1)
    block = extract_from_global(acc, own.task_index_map)
    return TaskCovariance(
        omega=project_covariance(block, cfg.epsilon_psd),
        task_index_map=own.task_index_map,
    )
