"""Hot numeric kernels with a numba path and a pure-numpy path.

Every public kernel exists twice, ``<name>_numba`` and ``<name>_numpy``; the
bare ``<name>`` is bound to whichever backend :mod:`climgp._accel` selected.
Both paths consume pre-drawn standard normal noise so that, given the same
inputs, they produce the same trajectories up to floating-point roundoff.

Conventions shared by all kernels:

* ``Z`` is the ``(n, p)`` design grid; column 0 is scaled time.
* the basis is ``h(z) = (1, z_0, ..., z_{p-1})``.
* ``nugget`` is added to the correlation of two inputs that coincide exactly,
  which keeps the cached correlation matrix well conditioned while leaving
  grid-point interpolation exact.
"""
import numpy as np

from ._accel import USE_NUMBA, njit

__all__ = [
    "corr_matrix",
    "cross_corr",
    "simulate_paths",
    "path_loglik_batch",
    "simulate_mv_paths",
    "gibbs_zeta_p_loop",
]

_LOG_2PI = float(np.log(2.0 * np.pi))
_CHUNK = 256


# ---------------------------------------------------------------------------
# numpy path
# ---------------------------------------------------------------------------

def corr_matrix_numpy(Z, r, nugget=0.0):
    diff2 = (Z[:, None, :] - Z[None, :, :]) ** 2
    A = np.exp(-(diff2 @ r))
    A[np.diag_indices_from(A)] += nugget
    return A


def cross_corr_numpy(X, Z, r, nugget=0.0):
    diff = X[:, None, :] - Z[None, :, :]
    S = np.exp(-((diff ** 2) @ r))
    if nugget:
        S += nugget * np.all(diff == 0.0, axis=-1)
    return S


def _batched_factors(Z, R, nugget):
    """Correlation matrices for a stack of smoothness vectors -> (Linv, A)."""
    diff2 = (Z[:, None, :] - Z[None, :, :]) ** 2
    A = np.exp(-np.einsum("ijp,mp->mij", diff2, R))
    idx = np.arange(Z.shape[0])
    A[:, idx, idx] += nugget
    L = np.linalg.cholesky(A)
    return np.linalg.inv(L)


def _basis(Z):
    return np.hstack([np.ones((Z.shape[0], 1)), Z])


def simulate_paths_numpy(x0, t_next, Z, R, Beta, Dv, s2f, s2e, noise, nugget=0.0):
    M, L = noise.shape
    out = np.empty((M, L))
    H = _basis(Z)
    for lo in range(0, M, _CHUNK):
        hi = min(M, lo + _CHUNK)
        Linv = _batched_factors(Z, R[lo:hi], nugget)
        resid = Dv[lo:hi] - Beta[lo:hi] @ H.T
        alpha = np.einsum("mji,mj->mi", Linv, np.einsum("mij,mj->mi", Linv, resid))
        x = np.full(hi - lo, float(x0))
        r_t, r_v = R[lo:hi, 0:1], R[lo:hi, 1:2]
        b = Beta[lo:hi]
        for j in range(L):
            t = t_next[j]
            dt = t - Z[:, 0]
            dv = x[:, None] - Z[None, :, 1]
            s = np.exp(-(r_t * dt ** 2 + r_v * dv ** 2))
            hit = (dt == 0.0) & (dv == 0.0)
            if nugget:
                s += nugget * hit
            u = np.einsum("mij,mj->mi", Linv, s)
            q = np.sum(u * u, axis=1)
            mean = b[:, 0] + b[:, 1] * t + b[:, 2] * x + np.sum(s * alpha, axis=1)
            rows, cols = np.nonzero(hit)
            mean[rows] = Dv[lo:hi][rows, cols]
            q[rows] = 1.0
            var = s2f[lo:hi] * np.maximum(1.0 - q, 0.0) + s2e[lo:hi]
            x = mean + np.sqrt(var) * noise[lo:hi, j]
            out[lo:hi, j] = x
    return out


def path_loglik_batch_numpy(x_prev, x_next, t_next, Z, R, Beta, Dv, s2f, s2e, nugget=0.0):
    M = R.shape[0]
    out = np.empty(M)
    H = _basis(Z)
    X = np.column_stack([t_next, x_prev])
    Hx = _basis(X)
    diff = X[:, None, :] - Z[None, :, :]
    diff2 = diff ** 2
    hit = np.all(diff == 0.0, axis=-1)
    for lo in range(0, M, _CHUNK):
        hi = min(M, lo + _CHUNK)
        Linv = _batched_factors(Z, R[lo:hi], nugget)
        resid = Dv[lo:hi] - Beta[lo:hi] @ H.T
        alpha = np.einsum("mji,mj->mi", Linv, np.einsum("mij,mj->mi", Linv, resid))
        S = np.exp(-np.einsum("ljp,mp->mlj", diff2, R[lo:hi]))
        if nugget:
            S += nugget * hit[None]
        U = np.einsum("mij,mlj->mli", Linv, S)
        q = np.sum(U * U, axis=2)
        mean = Beta[lo:hi] @ Hx.T + np.einsum("mlj,mj->ml", S, alpha)
        steps, cols = np.nonzero(hit)
        mean[:, steps] = Dv[lo:hi][:, cols]
        q[:, steps] = 1.0
        var = s2f[lo:hi, None] * np.maximum(1.0 - q, 0.0) + s2e[lo:hi, None]
        z = (x_next[None, :] - mean) ** 2 / var
        out[lo:hi] = -0.5 * np.sum(_LOG_2PI + np.log(var) + z, axis=1)
    return out


def simulate_mv_paths_numpy(x0, t_next, Z, R, B, D, Sf, Se, noise, nugget=0.0):
    M, L, K = noise.shape
    out = np.empty((M, L, K))
    H = _basis(Z)
    for lo in range(0, M, _CHUNK):
        hi = min(M, lo + _CHUNK)
        Linv = _batched_factors(Z, R[lo:hi], nugget)
        resid = D[lo:hi] - np.einsum("nj,mjk->mnk", H, B[lo:hi])
        alpha = np.einsum("mji,mjk->mik", Linv, np.einsum("mij,mjk->mik", Linv, resid))
        x = np.tile(np.asarray(x0, dtype=float), (hi - lo, 1))
        for j in range(L):
            X = np.concatenate([np.full((hi - lo, 1), t_next[j]), x], axis=1)
            diff = X[:, None, :] - Z[None, :, :]
            s = np.exp(-np.einsum("mnp,mp->mn", diff ** 2, R[lo:hi]))
            hit = np.all(diff == 0.0, axis=-1)
            if nugget:
                s += nugget * hit
            u = np.einsum("mij,mj->mi", Linv, s)
            c = np.maximum(1.0 - np.sum(u * u, axis=1), 0.0)
            hx = np.concatenate([np.ones((hi - lo, 1)), X], axis=1)
            mean = np.einsum("mj,mjk->mk", hx, B[lo:hi]) + np.einsum("mn,mnk->mk", s, alpha)
            rows, cols = np.nonzero(hit)
            mean[rows] = D[lo:hi][rows, cols]
            c[rows] = 0.0
            cov = c[:, None, None] * Sf[lo:hi] + Se[lo:hi]
            Lc = np.linalg.cholesky(cov)
            x = mean + np.einsum("mkl,ml->mk", Lc, noise[lo:hi, j])
            out[lo:hi, j] = x
    return out


def gibbs_zeta_p_loop_numpy(log_m, gammas, extra, uniforms):
    """Alternate zeta | p and p | zeta with pre-drawn variates.

    ``gammas[i, k] ~ Gamma(alpha_k)`` and ``extra[i] ~ Gamma(1)`` build the
    Dirichlet(alpha + e_zeta) draw; ``uniforms[i]`` picks zeta.
    Returns the zeta draws (0-based) and the p draws.
    """
    n, K = gammas.shape
    zeta = np.empty(n, dtype=np.int64)
    p_out = np.empty((n, K))
    p = gammas[0] / gammas[0].sum()
    lm = log_m - log_m.max()
    for i in range(n):
        w = np.log(p) + lm
        w = np.exp(w - w.max())
        c = np.cumsum(w)
        z = int(np.searchsorted(c, uniforms[i] * c[-1], side="right"))
        z = min(z, K - 1)
        g = gammas[i].copy()
        g[z] += extra[i]
        p = g / g.sum()
        zeta[i] = z
        p_out[i] = p
    return zeta, p_out


# ---------------------------------------------------------------------------
# numba path
# ---------------------------------------------------------------------------

@njit
def corr_matrix_numba(Z, r, nugget=0.0):
    n, p = Z.shape
    A = np.empty((n, n))
    for i in range(n):
        A[i, i] = 1.0 + nugget
        for j in range(i):
            acc = 0.0
            for k in range(p):
                d = Z[i, k] - Z[j, k]
                acc += r[k] * d * d
            v = np.exp(-acc)
            A[i, j] = v
            A[j, i] = v
    return A


@njit
def cross_corr_numba(X, Z, r, nugget=0.0):
    L, p = X.shape
    n = Z.shape[0]
    S = np.empty((L, n))
    for l in range(L):
        for i in range(n):
            acc = 0.0
            same = True
            for k in range(p):
                d = X[l, k] - Z[i, k]
                if d != 0.0:
                    same = False
                acc += r[k] * d * d
            v = np.exp(-acc)
            if same:
                v += nugget
            S[l, i] = v
    return S


@njit
def _lower_inverse(A):
    L = np.linalg.cholesky(A)
    n = L.shape[0]
    Li = np.zeros((n, n))
    for j in range(n):
        Li[j, j] = 1.0 / L[j, j]
        for i in range(j + 1, n):
            acc = 0.0
            for k in range(j, i):
                acc += L[i, k] * Li[k, j]
            Li[i, j] = -acc / L[i, i]
    return Li


@njit
def _kernel_row(point, Z, r, nugget, s):
    # returns the index of an exactly matching grid point, or -1
    n, p = Z.shape
    hit = -1
    for i in range(n):
        acc = 0.0
        same = True
        for k in range(p):
            d = point[k] - Z[i, k]
            if d != 0.0:
                same = False
            acc += r[k] * d * d
        v = np.exp(-acc)
        if same:
            v += nugget
            hit = i
        s[i] = v
    return hit


@njit
def _quad_lower(Li, s):
    n = s.shape[0]
    q = 0.0
    for i in range(n):
        acc = 0.0
        for k in range(i + 1):
            acc += Li[i, k] * s[k]
        q += acc * acc
    return q


@njit
def _weights(Li, resid):
    # Li.T @ (Li @ resid) for a matrix right-hand side
    n, K = resid.shape
    tmp = Li @ resid
    return Li.T @ tmp


@njit
def simulate_paths_numba(x0, t_next, Z, R, Beta, Dv, s2f, s2e, noise, nugget=0.0):
    M, L = noise.shape
    n = Z.shape[0]
    out = np.empty((M, L))
    point = np.empty(2)
    s = np.empty(n)
    for m in range(M):
        Li = _lower_inverse(corr_matrix_numba(Z, R[m], nugget))
        resid = np.empty((n, 1))
        for i in range(n):
            resid[i, 0] = Dv[m, i] - (Beta[m, 0] + Beta[m, 1] * Z[i, 0] + Beta[m, 2] * Z[i, 1])
        alpha = _weights(Li, resid)[:, 0]
        x = x0
        for j in range(L):
            point[0] = t_next[j]
            point[1] = x
            hit = _kernel_row(point, Z, R[m], nugget, s)
            q = _quad_lower(Li, s)
            mean = Beta[m, 0] + Beta[m, 1] * t_next[j] + Beta[m, 2] * x
            for i in range(n):
                mean += s[i] * alpha[i]
            if hit >= 0:
                mean, q = Dv[m, hit], 1.0
            var = s2f[m] * max(1.0 - q, 0.0) + s2e[m]
            x = mean + np.sqrt(var) * noise[m, j]
            out[m, j] = x
    return out


@njit
def path_loglik_batch_numba(x_prev, x_next, t_next, Z, R, Beta, Dv, s2f, s2e, nugget=0.0):
    M = R.shape[0]
    L = x_prev.shape[0]
    n = Z.shape[0]
    out = np.empty(M)
    point = np.empty(2)
    s = np.empty(n)
    log2pi = np.log(2.0 * np.pi)
    for m in range(M):
        Li = _lower_inverse(corr_matrix_numba(Z, R[m], nugget))
        resid = np.empty((n, 1))
        for i in range(n):
            resid[i, 0] = Dv[m, i] - (Beta[m, 0] + Beta[m, 1] * Z[i, 0] + Beta[m, 2] * Z[i, 1])
        alpha = _weights(Li, resid)[:, 0]
        total = 0.0
        for j in range(L):
            point[0] = t_next[j]
            point[1] = x_prev[j]
            hit = _kernel_row(point, Z, R[m], nugget, s)
            q = _quad_lower(Li, s)
            mean = Beta[m, 0] + Beta[m, 1] * t_next[j] + Beta[m, 2] * x_prev[j]
            for i in range(n):
                mean += s[i] * alpha[i]
            if hit >= 0:
                mean, q = Dv[m, hit], 1.0
            var = s2f[m] * max(1.0 - q, 0.0) + s2e[m]
            e = x_next[j] - mean
            total += -0.5 * (log2pi + np.log(var) + e * e / var)
        out[m] = total
    return out


@njit
def simulate_mv_paths_numba(x0, t_next, Z, R, B, D, Sf, Se, noise, nugget=0.0):
    M, L, K = noise.shape
    n, p = Z.shape
    m_basis = p + 1
    out = np.empty((M, L, K))
    point = np.empty(p)
    hx = np.empty(m_basis)
    s = np.empty(n)
    for m in range(M):
        Li = _lower_inverse(corr_matrix_numba(Z, R[m], nugget))
        resid = np.empty((n, K))
        for i in range(n):
            for k in range(K):
                acc = B[m, 0, k]
                for j in range(p):
                    acc += Z[i, j] * B[m, j + 1, k]
                resid[i, k] = D[m, i, k] - acc
        alpha = _weights(Li, resid)
        x = x0.copy()
        for j in range(L):
            point[0] = t_next[j]
            for k in range(K):
                point[k + 1] = x[k]
            hit = _kernel_row(point, Z, R[m], nugget, s)
            c = max(1.0 - _quad_lower(Li, s), 0.0)
            if hit >= 0:
                c = 0.0
            hx[0] = 1.0
            for k in range(p):
                hx[k + 1] = point[k]
            cov = c * Sf[m] + Se[m]
            Lc = np.linalg.cholesky(cov)
            mean = np.zeros(K)
            for k in range(K):
                acc = 0.0
                for jj in range(m_basis):
                    acc += hx[jj] * B[m, jj, k]
                for i in range(n):
                    acc += s[i] * alpha[i, k]
                mean[k] = D[m, hit, k] if hit >= 0 else acc
            for k in range(K):
                acc = mean[k]
                for l in range(k + 1):
                    acc += Lc[k, l] * noise[m, j, l]
                x[k] = acc
                out[m, j, k] = acc
    return out


@njit
def gibbs_zeta_p_loop_numba(log_m, gammas, extra, uniforms):
    n, K = gammas.shape
    zeta = np.empty(n, dtype=np.int64)
    p_out = np.empty((n, K))
    p = gammas[0] / gammas[0].sum()
    lm = log_m - log_m.max()
    w = np.empty(K)
    for i in range(n):
        wmax = -np.inf
        for k in range(K):
            w[k] = np.log(p[k]) + lm[k]
            if w[k] > wmax:
                wmax = w[k]
        total = 0.0
        for k in range(K):
            w[k] = np.exp(w[k] - wmax)
            total += w[k]
        target = uniforms[i] * total
        acc = 0.0
        z = K - 1
        for k in range(K):
            acc += w[k]
            if acc > target:
                z = k
                break
        g_sum = 0.0
        for k in range(K):
            g_sum += gammas[i, k]
        g_sum += extra[i]
        for k in range(K):
            p[k] = gammas[i, k] / g_sum
        p[z] += extra[i] / g_sum
        zeta[i] = z
        for k in range(K):
            p_out[i, k] = p[k]
    return zeta, p_out


def _as_f8(*arrays):
    return tuple(np.ascontiguousarray(a, dtype=np.float64) for a in arrays)


def _dispatch(numba_fn, numpy_fn):
    if USE_NUMBA:
        def call(*args, nugget=0.0):
            return numba_fn(*_as_f8(*args), float(nugget))
    else:
        def call(*args, nugget=0.0):
            return numpy_fn(*_as_f8(*args), nugget=float(nugget))
    call.__name__ = numpy_fn.__name__.replace("_numpy", "")
    call.__doc__ = numpy_fn.__doc__
    return call


def _scalar_first(numba_fn, numpy_fn):
    # x0 is a scalar for the univariate simulator
    def call(x0, *args, nugget=0.0):
        if USE_NUMBA:
            return numba_fn(float(x0), *_as_f8(*args), float(nugget))
        return numpy_fn(float(x0), *_as_f8(*args), nugget=float(nugget))

    call.__name__ = numpy_fn.__name__.replace("_numpy", "")
    call.__doc__ = numpy_fn.__doc__
    return call


def gibbs_zeta_p_loop(log_m, gammas, extra, uniforms):
    fn = gibbs_zeta_p_loop_numba if USE_NUMBA else gibbs_zeta_p_loop_numpy
    return fn(*_as_f8(log_m, gammas, extra, uniforms))


corr_matrix = _dispatch(corr_matrix_numba, corr_matrix_numpy)
cross_corr = _dispatch(cross_corr_numba, cross_corr_numpy)
simulate_paths = _scalar_first(simulate_paths_numba, simulate_paths_numpy)
path_loglik_batch = _dispatch(path_loglik_batch_numba, path_loglik_batch_numpy)
simulate_mv_paths = _dispatch(simulate_mv_paths_numba, simulate_mv_paths_numpy)
