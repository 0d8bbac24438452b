import numpy as np
import pytest

CHANNELS = [
    "body_acc_x", "body_acc_y", "body_acc_z",
    "body_gyro_x", "body_gyro_y", "body_gyro_z",
    "total_acc_x", "total_acc_y", "total_acc_z",
]


def _write_split(root, tag, n, rng):
    signals = root / tag / "Inertial Signals"
    signals.mkdir(parents=True)
    labels = rng.integers(1, 7, size=n)
    t = np.arange(128)
    for c, name in enumerate(CHANNELS):
        freq = 0.01 + 0.02 * labels[:, None]
        rows = 0.3 * np.sin(2 * np.pi * freq * t + 0.7 * c) + rng.normal(0, 0.05, (n, 128))
        np.savetxt(signals / f"{name}_{tag}.txt", rows, fmt="%15.7e")
    np.savetxt(root / tag / f"y_{tag}.txt", labels, fmt="%d")
    return labels


@pytest.fixture(scope="session")
def har_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("har")
    rng = np.random.default_rng(0)
    _write_split(root, "train", 48, rng)
    _write_split(root, "test", 32, rng)
    return root
