"""Image quality metrics: MSE, PSNR, and windowed SSIM.

PSNR uses the squared-peak convention 10*log10(L^2 / MSE). SSIM follows the
luminance/contrast/structure decomposition with an 11x11 Gaussian window
(sigma 1.5) and a valid-region mean (no padding).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

PSNR_INF = math.inf


def _check_pair(a: np.ndarray, b: np.ndarray):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def mse(a: np.ndarray, b: np.ndarray) -> float:
    """Mean squared difference over all pixels."""
    a, b = _check_pair(a, b)
    return float(np.mean((a - b) ** 2))


def psnr(a: np.ndarray, b: np.ndarray, data_range: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; +inf when the images are equal."""
    m = mse(a, b)
    if m == 0.0:
        return PSNR_INF
    return 10.0 * math.log10(data_range * data_range / m)


@dataclass(frozen=True)
class SsimParams:
    k1: float = 0.01
    k2: float = 0.03
    data_range: float = 1.0
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0
    window_size: int = 11
    window_sigma: float = 1.5

    def __post_init__(self):
        if self.k1 <= 0 or self.k2 <= 0 or self.data_range <= 0:
            raise ValueError("k1, k2, and data_range must be > 0")
        if self.window_size < 3 or self.window_size % 2 == 0:
            raise ValueError("window_size must be odd and >= 3")
        if self.window_sigma <= 0:
            raise ValueError("window_sigma must be > 0")

    @property
    def c1(self) -> float:
        return (self.k1 * self.data_range) ** 2

    @property
    def c2(self) -> float:
        return (self.k2 * self.data_range) ** 2

    @property
    def c3(self) -> float:
        return self.c2 / 2.0

    def window(self) -> np.ndarray:
        """1-D Gaussian window taps, normalised to sum 1."""
        half = self.window_size // 2
        k = np.arange(-half, half + 1, dtype=np.float64)
        g = np.exp(-(k * k) / (2.0 * self.window_sigma ** 2))
        return g / g.sum()


def _valid_filter(img: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """Separable valid-mode correlation with a symmetric 1-D window."""
    k = len(taps)
    h, w = img.shape
    out = np.zeros((h, w - k + 1))
    for i in range(k):
        out += taps[i] * img[:, i:i + w - k + 1]
    out2 = np.zeros((h - k + 1, w - k + 1))
    for i in range(k):
        out2 += taps[i] * out[i:i + h - k + 1, :]
    return out2


def ssim(a: np.ndarray, b: np.ndarray, params: SsimParams = SsimParams(),
         return_map: bool = False):
    """Mean structural similarity over the valid window region.

    Local means, variances, and covariance come from Gaussian-window moments;
    variances use the biased E[x^2]-E[x]^2 form, floored at zero (asserted
    not to dip below -1e-12 first). With the default unit exponents the
    per-pixel score reduces to the familiar closed form.
    """
    a, b = _check_pair(a, b)
    k = params.window_size
    if a.shape[0] < k or a.shape[1] < k:
        raise ValueError(f"images must be at least {k}x{k} for SSIM")
    taps = params.window()

    mu_a = _valid_filter(a, taps)
    mu_b = _valid_filter(b, taps)
    var_a = _valid_filter(a * a, taps) - mu_a * mu_a
    var_b = _valid_filter(b * b, taps) - mu_b * mu_b
    cov = _valid_filter(a * b, taps) - mu_a * mu_b
    if var_a.size and (var_a.min() < -1e-12 or var_b.min() < -1e-12):
        raise AssertionError("window variance fell below the -1e-12 floor")
    var_a = np.maximum(var_a, 0.0)
    var_b = np.maximum(var_b, 0.0)
    sig_a = np.sqrt(var_a)
    sig_b = np.sqrt(var_b)

    c1, c2, c3 = params.c1, params.c2, params.c3
    lum = (2.0 * mu_a * mu_b + c1) / (mu_a * mu_a + mu_b * mu_b + c1)
    con = (2.0 * sig_a * sig_b + c2) / (var_a + var_b + c2)
    stru = (cov + c3) / (sig_a * sig_b + c3)
    if params.alpha == params.beta == params.gamma == 1.0:
        smap = lum * con * stru
    else:
        smap = (np.power(lum, params.alpha) * np.power(con, params.beta)
                * np.power(stru, params.gamma))
    score = float(np.mean(smap))
    if return_map:
        return score, smap
    return score


# ---------------------------------------------------------------------------
# Metric reports (the benchmark table schema)
# ---------------------------------------------------------------------------

CSV_HEADER = ["image_id", "algorithm", "noise", "mse", "psnr_db", "ssim"]
MEAN_ID = "__mean__"


@dataclass
class MetricRow:
    image_id: str
    algorithm: str
    noise: str
    mse: float
    psnr_db: float
    ssim: float


@dataclass
class MetricReport:
    rows: list = field(default_factory=list)

    def add(self, image_id: str, algorithm: str, noise: str,
            a: np.ndarray, b: np.ndarray) -> MetricRow:
        """Score image `a` against reference `b` and append a row."""
        row = MetricRow(image_id, algorithm, noise,
                        mse(a, b), psnr(a, b), ssim(a, b))
        self.rows.append(row)
        return row

    def aggregates(self) -> list:
        """Mean rows per (algorithm, noise), sorted; image_id is __mean__.

        PSNR averages only the finite entries (an all-equal pair contributes
        its MSE/SSIM but no finite PSNR).
        """
        groups = {}
        for r in self.rows:
            groups.setdefault((r.algorithm, r.noise), []).append(r)
        out = []
        for (algo, noise) in sorted(groups):
            rs = groups[(algo, noise)]
            finite = [r.psnr_db for r in rs if math.isfinite(r.psnr_db)]
            mean_psnr = sum(finite) / len(finite) if finite else PSNR_INF
            out.append(MetricRow(MEAN_ID, algo, noise,
                                 sum(r.mse for r in rs) / len(rs),
                                 mean_psnr,
                                 sum(r.ssim for r in rs) / len(rs)))
        return out

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(CSV_HEADER)
            for r in list(self.rows) + self.aggregates():
                w.writerow([r.image_id, r.algorithm, r.noise,
                            repr(r.mse), _fmt_psnr(r.psnr_db), repr(r.ssim)])


def _fmt_psnr(v: float) -> str:
    return "inf" if math.isinf(v) else repr(v)
