"""One-time calibration of the synthetic 50-d neuron surrogate.

Draws the two fixed 5x50 projection matrices, then picks the logistic
gain/offset per response channel so that firing rates span well over 80%
of [0, 200] Hz when stimulus coefficients are sampled uniformly from the
radius-2 ball.  The resulting constants are frozen into
``src/stiminv/data/surrogate_v1.json`` and must not be regenerated
casually: datasets and recorded results depend on them.

Run from the repository root:

    python3 scripts/calibrate_surrogate.py
"""

import json
from pathlib import Path

import numpy as np

MATRIX_SEED = 771100
CALIBRATION_SEED = 771101
THETA_DIM = 50
PROJ_DIM = 5
RADIUS = 2.0
N_SAMPLES = 100_000
MAX_RATE_HZ = 200.0
# the 1%..99% quantile band of the projected norm is mapped onto
# logistic arguments [-4, 4]: sigma spans 0.018..0.982 of full scale
SIGMOID_SPAN = 8.0

OUT = Path(__file__).resolve().parent.parent / "src" / "stiminv" / "data" / "surrogate_v1.json"


def sample_ball(rng, n, dim, radius):
    direction = rng.normal(size=(n, dim))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    r = radius * rng.uniform(size=(n, 1)) ** (1.0 / dim)
    return direction * r


def main():
    mat_rng = np.random.default_rng(MATRIX_SEED)
    projections = [mat_rng.normal(size=(PROJ_DIM, THETA_DIM)) for _ in range(2)]

    cal_rng = np.random.default_rng(CALIBRATION_SEED)
    thetas = sample_ball(cal_rng, N_SAMPLES, THETA_DIM, RADIUS)

    alpha, offset, quantiles = [], [], []
    for a_mat in projections:
        norms = np.linalg.norm(thetas @ a_mat.T, axis=1)
        q01, q50, q99 = np.quantile(norms, [0.01, 0.5, 0.99])
        gain = SIGMOID_SPAN / (q99 - q01)
        alpha.append(gain)
        offset.append(gain * q50)
        quantiles.append({"q01": q01, "q50": q50, "q99": q99})

    config = {
        "version": 1,
        "theta_dim": THETA_DIM,
        "response_dim": 2,
        "radius": RADIUS,
        "max_rate_hz": MAX_RATE_HZ,
        "alpha": alpha,
        "offset": offset,
        "projections": [m.tolist() for m in projections],
        "calibration": {
            "matrix_seed": MATRIX_SEED,
            "calibration_seed": CALIBRATION_SEED,
            "n_samples": N_SAMPLES,
            "norm_quantiles": quantiles,
        },
    }
    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text(json.dumps(config, sort_keys=True))

    rates = MAX_RATE_HZ / (
        1.0
        + np.exp(
            -(
                np.array(alpha)
                * np.stack([np.linalg.norm(thetas @ m.T, axis=1) for m in projections], axis=1)
                - np.array(offset)
            )
        )
    )
    span = rates.max(axis=0) - rates.min(axis=0)
    print(f"wrote {OUT}")
    print(f"rate span per channel: {span} Hz ({100 * span / MAX_RATE_HZ} % of full scale)")


if __name__ == "__main__":
    main()
