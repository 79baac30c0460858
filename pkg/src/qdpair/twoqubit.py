"""Two-photon polarization states: cascade ket, density matrices, negativity.

All 4x4 objects use the basis order HH, HV, VH, VV with the XX photon first.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import PLANCK_UEV_PS

BASIS = ("HH", "HV", "VH", "VV")


def cascade_ket(delta_tau: float, fss: float, planck: float = PLANCK_UEV_PS) -> np.ndarray:
    """Pair state (|HH> + exp(-i 2 pi dtau fss / h)|VV>)/sqrt(2).

    ``delta_tau`` in ps is the X emission time minus the XX emission time,
    ``fss`` the fine-structure splitting in µeV.
    """
    if fss < 0:
        raise ValueError(f"fine-structure splitting must be >= 0, got {fss}")
    if delta_tau < 0:
        raise ValueError(f"delta_tau must be >= 0, got {delta_tau}")
    phase = 2 * np.pi * delta_tau * fss / planck
    return np.array([1.0, 0.0, 0.0, np.exp(-1j * phase)], dtype=complex) / np.sqrt(2)


def bell_state(name: str) -> np.ndarray:
    s = 1 / np.sqrt(2)
    states = {
        "phi+": [s, 0, 0, s],
        "phi-": [s, 0, 0, -s],
        "psi+": [0, s, s, 0],
        "psi-": [0, s, -s, 0],
    }
    return np.array(states[name.lower()], dtype=complex)


def density_from_ket(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex).reshape(4)
    norm = np.vdot(psi, psi).real
    if abs(norm - 1) > 1e-10:
        raise ValueError(f"ket is not normalized (norm^2 = {norm})")
    return np.outer(psi, psi.conj())


def partial_transpose(rho) -> np.ndarray:
    """Transpose on the second (X photon) subsystem."""
    r = np.asarray(rho, dtype=complex).reshape(2, 2, 2, 2)
    return r.transpose(0, 3, 2, 1).reshape(4, 4)


def _jacobi_symmetric(a: np.ndarray, tol: float = 1e-12, max_sweeps: int = 50):
    a = a.copy()
    n = a.shape[0]
    v = np.eye(n)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.tril(a, -1) ** 2) * 2)
        if off < tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) < 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2 * apq)
                if theta == 0:
                    t = 1.0
                elif abs(theta) > 1e150:
                    t = 1 / (2 * theta)
                else:
                    t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1))
                c = 1 / np.sqrt(t * t + 1)
                s = t * c
                ap, aq = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap, aq = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    else:
        off = np.sqrt(np.sum(np.tril(a, -1) ** 2) * 2)
        if off >= tol:
            raise RuntimeError(f"Jacobi sweep did not converge (off-diagonal norm {off:.3e})")
    return np.diag(a).copy(), v


def eigh_hermitian4(m) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a 4x4 Hermitian matrix by cyclic Jacobi.

    Works on the real-symmetric 8x8 embedding ``[[Re, -Im], [Im, Re]]``, whose
    spectrum is the Hermitian spectrum with every eigenvalue doubled. Each
    returned pair is checked against its residual.
    """
    m = np.asarray(m, dtype=complex)
    if m.shape != (4, 4):
        raise ValueError(f"expected a 4x4 matrix, got shape {m.shape}")
    if np.max(np.abs(m - m.conj().T)) > 1e-10:
        raise ValueError("matrix is not Hermitian")
    m = (m + m.conj().T) / 2
    big = np.block([[m.real, -m.imag], [m.imag, m.real]])
    w8, v8 = _jacobi_symmetric(big)
    order = np.argsort(w8, kind="stable")
    w8, v8 = w8[order], v8[:, order]

    vals, vecs = [], []
    for k in range(8):
        z = v8[:4, k] + 1j * v8[4:, k]
        # project out already accepted vectors so degenerate pairs stay orthogonal
        for u in vecs:
            z = z - np.vdot(u, z) * u
        nz = np.linalg.norm(z)
        if nz < 0.5:
            continue
        z = z / nz
        vals.append(np.real(np.vdot(z, m @ z)))
        vecs.append(z)
        if len(vecs) == 4:
            break
    if len(vecs) != 4:
        raise RuntimeError("could not extract four independent eigenvectors")
    w = np.array(vals)
    v = np.column_stack(vecs)
    order = np.argsort(w, kind="stable")
    w, v = w[order], v[:, order]
    resid = np.linalg.norm(m @ v - v * w, axis=0)
    if np.any(resid > 1e-9):
        raise RuntimeError(f"eigenpair residual too large: {resid.max():.3e}")
    return w, v


def eigenvalues_hermitian4(m) -> np.ndarray:
    return eigh_hermitian4(m)[0]


def negativity2n(rho) -> float:
    """Twice the negativity: 2 * sum |negative eigenvalues| of the partial transpose."""
    w = eigenvalues_hermitian4(partial_transpose(np.asarray(rho)))
    return float(min(1.0, 2 * np.sum(np.abs(np.minimum(w, 0.0)))))


def fidelity_to_pure(rho, psi) -> float:
    psi = np.asarray(psi, dtype=complex).reshape(4)
    return float(np.real(np.vdot(psi, np.asarray(rho) @ psi)))


def purity(rho) -> float:
    rho = np.asarray(rho)
    return float(np.real(np.trace(rho @ rho)))


def trace_distance(a, b) -> float:
    w = np.linalg.eigvalsh(np.asarray(a) - np.asarray(b))
    return float(0.5 * np.sum(np.abs(w)))


def check_density(rho, atol: float = 1e-10) -> np.ndarray:
    """Return ``rho`` as an array after checking Hermiticity, unit trace and PSD."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (4, 4):
        raise ValueError(f"density matrix must be 4x4, got {rho.shape}")
    if np.max(np.abs(rho - rho.conj().T)) > atol:
        raise ValueError("density matrix is not Hermitian")
    if abs(np.trace(rho).real - 1) > atol:
        raise ValueError(f"density matrix trace {np.trace(rho).real} != 1")
    if np.linalg.eigvalsh(rho).min() < -1e-9:
        raise ValueError("density matrix is not positive semidefinite")
    return rho


def local_dephasing(rho, phase: float) -> np.ndarray:
    """Apply diag(1, exp(i phase)) to the X photon."""
    u = np.kron(np.eye(2), np.diag([1.0, np.exp(1j * phase)]))
    return u @ np.asarray(rho) @ u.conj().T


@dataclass
class DensityMatrix:
    """A reconstructed or model two-photon density matrix with provenance."""

    rho: np.ndarray
    window_ps: tuple[float, float] | None = None
    coincidences: int | None = None
    low_statistics: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.rho = check_density(self.rho)

    def __array__(self, dtype=None, copy=None):
        return self.rho if dtype is None else self.rho.astype(dtype)

    @property
    def negativity2n(self) -> float:
        return negativity2n(self.rho)

    def to_text(self) -> str:
        rows = []
        for r in self.rho:
            cells = ", ".join(f"[{z.real:.17g}, {z.imag:.17g}]" for z in r)
            rows.append(f"    [{cells}]")
        meta = {
            "basis": list(BASIS),
            "window_ps": list(self.window_ps) if self.window_ps is not None else None,
            "coincidences": self.coincidences,
            "low_statistics": self.low_statistics,
            **self.meta,
        }
        head = json.dumps(meta, sort_keys=True)[1:-1]
        return "{" + head + ',\n  "rho": [\n' + ",\n".join(rows) + "\n  ]\n}\n"

    @classmethod
    def from_text(cls, text: str) -> "DensityMatrix":
        doc = json.loads(text)
        arr = np.array(doc.pop("rho"), dtype=float)
        rho = arr[..., 0] + 1j * arr[..., 1]
        doc.pop("basis", None)
        window = doc.pop("window_ps", None)
        return cls(
            rho,
            window_ps=tuple(window) if window is not None else None,
            coincidences=doc.pop("coincidences", None),
            low_statistics=doc.pop("low_statistics", False),
            meta=doc,
        )
