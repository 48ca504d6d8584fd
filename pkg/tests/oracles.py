"""Independent reference computations used by the test-suite.

Each oracle reaches its answer by a route that does not share code with the
implementation it checks: closed forms, direct quadrature, or exact spectral
sums for Gaussian expectations.
"""
import numpy as np


def freq_mesh(L, N):
    k = np.fft.fftfreq(N, d=L / N)
    return np.meshgrid(k, k, indexing="ij")


def chi_reference(L, N):
    kx, ky = freq_mesh(L, N)
    rho = np.maximum(abs(kx), abs(ky))
    out = np.zeros_like(rho)
    for idx, r in np.ndenumerate(rho):
        if r <= 1 / 8:
            out[idx] = 0.0
        elif r >= 1 / 4:
            out[idx] = 1.0
        else:
            t = (r - 1 / 8) / (1 / 8)
            out[idx] = 10 * t**3 - 15 * t**4 + 6 * t**5
    return out


def resonant_weight(profiles):
    """sum_{|i-j|<=1} rho_i rho_j from a stack of partition profiles."""
    nb = len(profiles)
    w = np.zeros_like(profiles[0])
    for i in range(nb):
        for j in range(nb):
            if abs(i - j) <= 1:
                w += profiles[i] * profiles[j]
    return w


def expected_resonant_mean(L, N, mollifier_hat, profiles):
    """E[(I xi_a o xi_a)(x)] for lattice white noise of cell variance 1/h^2.

    For f = F^-1(a xi^), g = F^-1(b xi^) on the grid, E[f(x) g(x)] equals
    L^-2 sum_k a(k) conj(b(k)); the resonant restriction inserts
    sum_{|i-j|<=1} rho_i rho_j.
    """
    kx, ky = freq_mesh(L, N)
    k2 = 4 * np.pi**2 * (kx**2 + ky**2)
    k2[0, 0] = np.inf
    chi = chi_reference(L, N)
    m2 = np.abs(mollifier_hat) ** 2
    return float((resonant_weight(profiles) * chi * m2 / k2).sum() / L**2)


def expected_pointwise_mean(L, N, mollifier_hat, second_hat=None):
    """E[I xi_a(x) * (xi_a * extra)(x)] with an optional extra multiplier."""
    kx, ky = freq_mesh(L, N)
    k2 = 4 * np.pi**2 * (kx**2 + ky**2)
    k2[0, 0] = np.inf
    chi = chi_reference(L, N)
    extra = 1.0 if second_hat is None else second_hat
    return float((chi * np.abs(mollifier_hat) ** 2 * extra / k2).sum() / L**2)


def riccati(c, kappa, t):
    return c / (1 + c * kappa * t / 2)


def direct_IxiXi_average(I, xi, psi, C, h, x):
    """Direct quadrature of int ((I(y) - I(x)) xi(y) - C) psi(x - y) dy at one index.

    ``psi`` is centred at index N/2; periodic wrap is explicit.
    """
    N = I.shape[0]
    c = N // 2
    total = 0.0
    for i in range(N):
        for j in range(N):
            w = psi[(x[0] - i + c) % N, (x[1] - j + c) % N]
            if w == 0.0:
                continue
            total += ((I[i, j] - I[x]) * xi[i, j] - C) * w
    return total * h * h
