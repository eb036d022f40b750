"""Smoke test for the `prnu` extension module.

Build and install first:  maturin develop -m crates/py/Cargo.toml
"""

import os
import tempfile

import prnu


def main():
    w = h = 64
    cams = [prnu.SimulatedCamera(100 + i, w, h, f"cam{i}") for i in range(3)]
    fps = []
    for c in cams:
        flats = [c.shoot("flat", s, level=96.0 + 32 * (s % 4)) for s in range(30)]
        fps.append(prnu.estimate_fingerprint(flats, c.camera_id))
    assert fps[0].width == w and fps[0].n_images == 30

    target = cams[1].shoot("testchart", 1000)
    ranking, decision = prnu.identify(target, fps)
    assert decision == "cam1", ranking
    assert len(ranking) == 3

    filtered = prnu.remove_fingerprint(target)
    spoofed = prnu.inject_fingerprint(filtered, fps[2])
    _, decision = prnu.identify(spoofed, fps)
    assert decision == "cam2", decision

    cleaned, iters = prnu.adp_remove(target, fps[1])
    assert 1 <= iters <= 10
    assert len(cleaned) == h and len(cleaned[0]) == w

    r = prnu.circular_xcorr([1.0, 2.0], [3.0, 4.0])
    assert all(abs(a - b) < 1e-12 for a, b in zip(r, [5.5, 5.0]))
    assert prnu.ccn([1.0, -1.0, 2.0, 0.5], [1.0, -1.0, 2.0, 0.5]) > 0

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "cam0.pnuf")
        fps[0].save(path)
        back = prnu.Fingerprint.load(path)
        assert back.camera_id == "cam0" and back.width == w
        img_path = os.path.join(d, "t.pgm")
        prnu.save_pgm(target, img_path)
        assert prnu.load_image(img_path) == target

    try:
        prnu.identify(target, [])
    except ValueError:
        pass
    else:
        raise AssertionError("empty candidate list accepted")

    print("python smoke test: ok")


if __name__ == "__main__":
    main()
