"""
Small dense Hermitian linear algebra, batched over leading axes.

Eigenproblems are solved in closed form for 2x2 blocks and by cyclic complex
Jacobi rotations otherwise. Every routine accepts arrays of shape ``(..., n, n)``
and is deterministic for a given input, independent of the batch size.
"""
import numpy as np
from scipy.stats import unitary_group

JACOBI_TOL = 1e-13
JACOBI_MAX_SWEEPS = 60
# off-diagonal entries at or below this fraction of the norm are dropped, not rotated
JACOBI_FLOOR = np.finfo(np.float64).eps ** 2

PAULI = np.array(
    [
        [[1, 0], [0, 1]],
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=np.complex128,
)


def hermitize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + np.conj(np.swapaxes(a, -1, -2)))


def _eigh_2x2(
    m: np.ndarray, vectors: bool
) -> tuple[np.ndarray, np.ndarray | None]:
    a = m[..., 0, 0].real
    d = m[..., 1, 1].real
    b = m[..., 0, 1]
    mean = 0.5 * (a + d)
    x, y, z = b.real, -b.imag, 0.5 * (a - d)
    transverse = np.hypot(x, y)
    r = np.hypot(transverse, z)
    w = np.stack([mean - r, mean + r], axis=-1)
    if not vectors:
        return w, None

    theta = np.arctan2(transverse, z)
    phi = np.arctan2(y, x)
    ct = np.cos(0.5 * theta)
    st = np.sin(0.5 * theta)
    ep = np.exp(1j * phi)
    v = np.empty(m.shape, dtype=np.complex128)
    # columns: eigenvector of mean - r, then of mean + r
    v[..., 0, 0] = st
    v[..., 1, 0] = -ep * ct
    v[..., 0, 1] = ct
    v[..., 1, 1] = ep * st
    return w, v


def _off_diagonal_norm(m: np.ndarray) -> np.ndarray:
    n = m.shape[-1]
    mask = ~np.eye(n, dtype=bool)
    return np.sqrt(np.sum(np.abs(m[:, mask]) ** 2, axis=-1))


def _eigh_jacobi(
    m: np.ndarray, vectors: bool, tol: float, max_sweeps: int
) -> tuple[np.ndarray, np.ndarray | None]:
    n = m.shape[-1]
    a = np.array(m, dtype=np.complex128).reshape(-1, n, n)
    v = np.broadcast_to(np.eye(n, dtype=np.complex128), a.shape).copy()
    scale = np.maximum(1.0, np.sqrt(np.sum(np.abs(a) ** 2, axis=(1, 2))))
    pairs = [(p, q) for p in range(n) for q in range(p + 1, n)]

    for _ in range(max_sweeps):
        if np.all(_off_diagonal_norm(a) <= tol * scale):
            break
        for p, q in pairs:
            apq = a[:, p, q]
            mag = np.abs(apq)
            active = mag > JACOBI_FLOOR * scale
            if not active.any():
                a[:, p, q] = 0.0
                a[:, q, p] = 0.0
                continue
            phase = np.where(active, np.exp(1j * np.angle(apq)), 1.0)
            app = a[:, p, p].real
            aqq = a[:, q, q].real
            theta = np.where(active, 0.5 * np.arctan2(2.0 * mag, aqq - app), 0.0)
            c = np.cos(theta)[:, None]
            s = np.sin(theta)[:, None]
            e_minus = np.conj(phase)[:, None]
            e_plus = phase[:, None]

            col_p = a[:, :, p].copy()
            col_q = a[:, :, q].copy()
            a[:, :, p] = c * col_p - s * e_minus * col_q
            a[:, :, q] = s * col_p + c * e_minus * col_q

            row_p = a[:, p, :].copy()
            row_q = a[:, q, :].copy()
            a[:, p, :] = c * row_p - s * e_plus * row_q
            a[:, q, :] = s * row_p + c * e_plus * row_q

            a[:, p, q] = 0.0
            a[:, q, p] = 0.0
            a[:, p, p] = a[:, p, p].real
            a[:, q, q] = a[:, q, q].real

            if vectors:
                vec_p = v[:, :, p].copy()
                vec_q = v[:, :, q].copy()
                v[:, :, p] = c * vec_p - s * e_minus * vec_q
                v[:, :, q] = s * vec_p + c * e_minus * vec_q

    w = np.diagonal(a, axis1=1, axis2=2).real
    order = np.argsort(w, axis=-1, kind="stable")
    w = np.take_along_axis(w, order, axis=-1)
    batch = m.shape[:-2]
    if not vectors:
        return w.reshape(*batch, n), None
    v = np.take_along_axis(v, order[:, None, :], axis=2)
    return w.reshape(*batch, n), v.reshape(*batch, n, n)


def eigh_hermitian(
    a: np.ndarray, tol: float = JACOBI_TOL, max_sweeps: int = JACOBI_MAX_SWEEPS
) -> tuple[np.ndarray, np.ndarray]:
    """
    Eigenvalues (ascending) and eigenvectors (columns) of Hermitian matrices.
    Only the upper triangle's Hermitian part matters; inputs are hermitized first.
    """
    m = hermitize(np.asarray(a, dtype=np.complex128))
    n = m.shape[-1]
    if n == 1:
        return m[..., 0].real.copy(), np.ones(m.shape, dtype=np.complex128)
    if n == 2:
        w, v = _eigh_2x2(m, vectors=True)
    else:
        w, v = _eigh_jacobi(m, vectors=True, tol=tol, max_sweeps=max_sweeps)
    assert v is not None
    return w, v


def eigvalsh_hermitian(a: np.ndarray, tol: float = JACOBI_TOL) -> np.ndarray:
    m = hermitize(np.asarray(a, dtype=np.complex128))
    n = m.shape[-1]
    if n == 1:
        return m[..., 0].real.copy()
    if n == 2:
        w, _ = _eigh_2x2(m, vectors=False)
        return w
    w, _ = _eigh_jacobi(m, vectors=False, tol=tol, max_sweeps=JACOBI_MAX_SWEEPS)
    return w


def trace_norm(a: np.ndarray) -> np.ndarray:
    """Sum of absolute eigenvalues of Hermitian matrices."""
    return np.sum(np.abs(eigvalsh_hermitian(a)), axis=-1)


def matrix_sqrt_inverse(a: np.ndarray) -> np.ndarray:
    w, v = eigh_hermitian(a)
    return (v * (1.0 / np.sqrt(w))[..., None, :]) @ np.conj(np.swapaxes(v, -1, -2))


def bloch_components(rho: np.ndarray) -> np.ndarray:
    """Pauli coordinates (x, y, z) of qubit operators, Tr(sigma_i rho)."""
    rho = np.asarray(rho)
    x = 2.0 * rho[..., 0, 1].real
    y = -2.0 * rho[..., 0, 1].imag
    z = (rho[..., 0, 0] - rho[..., 1, 1]).real
    return np.stack([x, y, z], axis=-1)


def from_bloch_components(vec: np.ndarray, trace: float = 1.0) -> np.ndarray:
    """Operator 1/2 (trace * I + v . sigma); trace 0 gives traceless directions."""
    vec = np.asarray(vec, dtype=np.float64)
    out = np.einsum("...i,ijk->...jk", vec.astype(np.complex128), PAULI[1:])
    out = out + trace * PAULI[0]
    return 0.5 * out


def hermitian_basis(dim: int) -> np.ndarray:
    """
    Orthonormal basis (Hilbert-Schmidt) of traceless Hermitian dim x dim matrices.
    Order: diagonal generators, then symmetric, then antisymmetric ones, which
    for qubits is (sigma_z, sigma_x, sigma_y) / sqrt(2).
    """
    basis: list[np.ndarray] = []
    for k in range(1, dim):
        diag = np.zeros(dim)
        diag[:k] = 1.0
        diag[k] = -k
        basis.append(np.diag(diag / np.sqrt(k * (k + 1))).astype(np.complex128))
    for j in range(dim):
        for k in range(j + 1, dim):
            sym = np.zeros((dim, dim), dtype=np.complex128)
            sym[j, k] = sym[k, j] = 1.0 / np.sqrt(2.0)
            basis.append(sym)
    for j in range(dim):
        for k in range(j + 1, dim):
            anti = np.zeros((dim, dim), dtype=np.complex128)
            anti[j, k] = -1j / np.sqrt(2.0)
            anti[k, j] = 1j / np.sqrt(2.0)
            basis.append(anti)
    return np.array(basis)


def haar_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    return np.asarray(unitary_group.rvs(dim, random_state=rng), dtype=np.complex128)


def ginibre_state(dim: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    """Hilbert-Schmidt random density matrix (Ginibre construction)."""
    rank = dim if rank is None else rank
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = g @ np.conj(g.T)
    return hermitize(rho / np.trace(rho).real)


def gaussian_traceless(dim: int, rng: np.random.Generator, count: int) -> np.ndarray:
    """Rotation-invariant traceless Hermitian directions with unit Hilbert-Schmidt norm."""
    g = rng.normal(size=(count, dim, dim)) + 1j * rng.normal(size=(count, dim, dim))
    h = hermitize(g)
    h = h - np.trace(h, axis1=1, axis2=2).real[:, None, None] * np.eye(dim) / dim
    norms = np.sqrt(np.sum(np.abs(h) ** 2, axis=(1, 2)))
    return h / norms[:, None, None]

