"""Independent reference implementations used by tests as ground truth."""
import numpy as np


def brute_force_loop_labels(points: np.ndarray, near: float, far: float) -> np.ndarray:
    """Literal transcription of the loop-closure definition: for each step,
    scan every earlier position within `near` and look for an intermediate
    point at least `far` away."""
    pts = np.asarray(points, dtype=np.float64)
    n = len(pts)
    out = np.zeros(n, dtype=np.int8)
    for t in range(n):
        d = np.linalg.norm(pts[:t] - pts[t], axis=1) if t else np.zeros(0)
        for tp in np.nonzero(d <= near)[0]:
            if np.any(d[tp + 1 : t] >= far):
                out[t] = 1
                break
    return out


def discounted_return_oracle(rewards, gamma: float, bootstrap: float) -> np.ndarray:
    """Explicit summation R_t = sum_k gamma^k r_{t+k} + gamma^(T-t) * bootstrap."""
    n = len(rewards)
    out = np.empty(n)
    for t in range(n):
        acc = sum(gamma**k * rewards[t + k] for k in range(n - t))
        out[t] = acc + gamma ** (n - t) * bootstrap
    return out
