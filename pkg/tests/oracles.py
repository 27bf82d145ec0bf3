"""Independent reference implementations used only to verify the fast paths.

Everything here is deliberately naive: O(n^2) matrix DFT, scalar-loop
filterbank construction, direct cosine sums for the DCT, and brute-force
central finite differences for gradients. None of it shares code with the
library paths it checks.
"""

import numpy as np

from nli_speech.nn.losses import softmax_cross_entropy


def naive_dft_power(frame: np.ndarray) -> np.ndarray:
    """|DFT|^2 on the non-negative bins via an explicit O(n^2) matrix product."""
    n = len(frame)
    idx = np.arange(n)
    bins = np.arange(n // 2 + 1)
    dft = np.exp(-2j * np.pi * np.outer(idx, bins) / n)
    return np.abs(frame @ dft) ** 2


def naive_mel_filterbank(cfg, sample_rate: int) -> np.ndarray:
    fmax = sample_rate / 2 if cfg.fmax is None else cfg.fmax
    mel_lo = 2595.0 * np.log10(1.0 + cfg.fmin / 700.0)
    mel_hi = 2595.0 * np.log10(1.0 + fmax / 700.0)
    pts = [mel_lo + (mel_hi - mel_lo) * i / (cfg.n_mels + 1) for i in range(cfg.n_mels + 2)]
    hz = [700.0 * (10.0 ** (m / 2595.0) - 1.0) for m in pts]
    n_bins = cfg.frame_len // 2 + 1
    fb = np.zeros((cfg.n_mels, n_bins))
    for m in range(cfg.n_mels):
        for b in range(n_bins):
            f = b * sample_rate / cfg.frame_len
            if hz[m] <= f <= hz[m + 1]:
                fb[m, b] = (f - hz[m]) / (hz[m + 1] - hz[m])
            elif hz[m + 1] < f <= hz[m + 2]:
                fb[m, b] = (hz[m + 2] - f) / (hz[m + 2] - hz[m + 1])
    return fb


def naive_mfcc(samples: np.ndarray, sample_rate: int, cfg) -> np.ndarray:
    """Frame loop, matrix DFT, direct filter summation, direct DCT sums.

    The O(n^2) DFT basis is built once and applied per frame; the arithmetic
    per frame is still the full quadratic sum, just not rebuilding exp terms.
    """
    samples = np.asarray(samples, dtype=np.float64)
    n = cfg.frame_len
    idx = np.arange(n)
    window = 0.5 - 0.5 * np.cos(2.0 * np.pi * idx / n)
    bins = np.arange(n // 2 + 1)
    dft = np.exp(-2j * np.pi * np.outer(idx, bins) / n)
    fb = naive_mel_filterbank(cfg, sample_rate)
    n_frames = 1 + (len(samples) - n) // cfg.hop
    out = np.zeros((n_frames, cfg.n_mfcc))
    m_count = cfg.n_mels
    for fi in range(n_frames):
        frame = samples[fi * cfg.hop : fi * cfg.hop + n] * window
        power = np.abs(frame @ dft) ** 2
        energies = np.array([np.sum(fb[m] * power) for m in range(m_count)])
        log_e = np.log(np.maximum(energies, cfg.log_floor))
        for c in range(cfg.n_mfcc):
            total = 0.0
            for m in range(m_count):
                total += log_e[m] * np.cos(np.pi * c * (2 * m + 1) / (2 * m_count))
            scale = np.sqrt(1.0 / m_count) if c == 0 else np.sqrt(2.0 / m_count)
            out[fi, c] = total * scale
    return out


def relative_error(analytic: float, numeric: float, floor: float = 1e-6) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def spaced_values(rng: np.random.Generator, shape) -> np.ndarray:
    """Random-order values with guaranteed pairwise gaps.

    Keeps max-pool argmaxes stable under finite-difference perturbation, so
    the subgradient comparison happens away from ties.
    """
    n = int(np.prod(shape))
    return rng.permutation(np.linspace(-1.0, 1.0, n)).reshape(shape)


def max_param_gradient_error(loss_fn, params, analytic_grads, eps: float = 1e-5) -> float:
    """Central finite differences over every parameter element."""
    worst = 0.0
    for p, g in zip(params, analytic_grads):
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            pos = it.multi_index
            orig = p[pos]
            p[pos] = orig + eps
            up = loss_fn()
            p[pos] = orig - eps
            down = loss_fn()
            p[pos] = orig
            numeric = (up - down) / (2 * eps)
            worst = max(worst, relative_error(g[pos], numeric))
    return worst


def check_network_gradients(net, x, y, eps: float = 1e-5, check_input: bool = True,
                            reseed: int | None = None):
    """Gradient-check a network end to end through softmax cross-entropy.

    Returns (max_param_error, max_input_error). reseed fixes the network's
    dropout stream before every forward so the checked function is
    deterministic.
    """
    training = reseed is not None

    def loss_at(inp):
        if reseed is not None:
            net.set_rng(np.random.default_rng(reseed))
        logits = net.forward(inp, training=training)
        loss, dlogits, _ = softmax_cross_entropy(logits, y)
        return loss, dlogits

    loss, dlogits = loss_at(x)
    net.zero_grads()
    dx = net.backward(dlogits)
    analytic = [g.copy() for g in net.gradients()]

    param_err = max_param_gradient_error(
        lambda: loss_at(x)[0], net.parameters(), analytic, eps
    )

    input_err = 0.0
    if check_input:
        it = np.nditer(x, flags=["multi_index"])
        for _ in it:
            pos = it.multi_index
            orig = x[pos]
            x[pos] = orig + eps
            up, _ = loss_at(x)
            x[pos] = orig - eps
            down, _ = loss_at(x)
            x[pos] = orig
            numeric = (up - down) / (2 * eps)
            input_err = max(input_err, relative_error(dx[pos], numeric))
    return param_err, input_err
