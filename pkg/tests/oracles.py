"""Slow, obviously-correct reference implementations used as test oracles."""

import numpy as np


def dft_matrix(n):
    k = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(k, k) / n)


def brute_fft2(img, rows, cols):
    padded = np.zeros((rows, cols))
    padded[: img.shape[0], : img.shape[1]] = img
    return dft_matrix(rows) @ padded @ dft_matrix(cols).T


def nested_convolution(scene, psf):
    p, q = scene.shape
    k, l = psf.shape
    out = np.zeros((p + k - 1, q + l - 1))
    for i in range(p):
        for j in range(q):
            for u in range(k):
                for v in range(l):
                    out[i + u, j + v] += scene[i, j] * psf[u, v]
    return out


def sliding_ssim(a, b, peak=1.0, radius=5, sigma=1.5):
    """Per-window SSIM averaged over every fully contained 11x11 window."""
    k = np.arange(-radius, radius + 1)
    g = np.exp(-(k ** 2) / (2 * sigma ** 2))
    w = np.outer(g, g)
    w /= w.sum()
    c1, c2 = (0.01 * peak) ** 2, (0.03 * peak) ** 2
    size = 2 * radius + 1
    vals = []
    for i in range(a.shape[0] - size + 1):
        for j in range(a.shape[1] - size + 1):
            pa = a[i:i + size, j:j + size]
            pb = b[i:i + size, j:j + size]
            ma, mb = np.sum(w * pa), np.sum(w * pb)
            va = np.sum(w * (pa - ma) ** 2)
            vb = np.sum(w * (pb - mb) ** 2)
            cov = np.sum(w * (pa - ma) * (pb - mb))
            vals.append(((2 * ma * mb + c1) * (2 * cov + c2))
                        / ((ma ** 2 + mb ** 2 + c1) * (va + vb + c2)))
    return float(np.mean(vals))


def cross_correlation_peak(a, b):
    """Integer shift ``(dy, dx)`` maximizing the circular correlation of ``b`` against ``a``."""
    corr = np.fft.ifft2(np.conj(np.fft.fft2(a)) * np.fft.fft2(b)).real
    dy, dx = np.unravel_index(np.argmax(corr), corr.shape)
    rows, cols = corr.shape
    return (dy if dy <= rows // 2 else dy - rows, dx if dx <= cols // 2 else dx - cols)
