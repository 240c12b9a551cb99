"""Quick end-to-end check of the Python bindings.

Build first:  pip install --no-build-isolation -e crates/py
"""

import math
import random

import mpcrn


def tone(n, f0=220.0):
    return [0.3 * math.sin(2 * math.pi * f0 * i / mpcrn.SAMPLE_RATE) for i in range(n)]


def main():
    rng = random.Random(0)
    clean = tone(8000)
    noisy = [c + 0.05 * rng.uniform(-1, 1) for c in clean]

    real, imag = mpcrn.stft(noisy)
    assert len(real[0]) == 257
    back = mpcrn.istft(real, imag)
    assert max(abs(a - b) for a, b in zip(back[512:-512], noisy[512:-512])) < 1e-9

    ident = mpcrn.Enhancer.identity()
    assert max(abs(a - b) for a, b in zip(ident.enhance(noisy), noisy)) < 1e-9

    enh = mpcrn.Enhancer.random(seed=3, toy=True)
    offline = enh.enhance(noisy)
    stream = enh.stream()
    online = []
    for start in range(0, len(noisy), 300):
        online += stream.push(noisy[start:start + 300])
    online += stream.flush()
    assert len(online) == len(offline) == len(noisy)
    assert max(abs(a - b) for a, b in zip(online, offline)) < 1e-5
    assert stream.frames_processed > 0

    a, b = mpcrn.triangle_correct(3e-310, -4e-310)
    assert abs(math.hypot(a, b) - 1.0) < 1e-12
    assert abs(mpcrn.si_sdr([2 * c for c in clean], clean) - 100.0) < 1e-9

    passed, rows = mpcrn.gradcheck(seed=1)
    assert passed and all(err < 1e-4 for *_, err in rows)

    result = mpcrn.train(
        "enc_channels = 3,4,4,4,4\npsm_hidden = 4\nepochs = 1\nmax_steps = 2\n"
        "batch_size = 2\nchunk_seconds = 0.25\ntrain_count = 4\nval_count = 2\n"
        "utterance_seconds = 0.3\nrecon = e\n"
    )
    assert result["steps"] == 2 and result["enhancer"].recon == "e"

    params = mpcrn.count_params()
    print(f"default model: {params} parameters, {mpcrn.macs_per_second() / 1e9:.2f} GMAC/s")
    print(f"toy SI-SDR of untrained output: {mpcrn.si_sdr(offline, clean):.2f} dB")
    print("smoke test passed")


if __name__ == "__main__":
    main()
