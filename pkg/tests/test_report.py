import numpy as np

from timatch.report import (
    render_mi_sanity,
    render_sweep,
    render_training_curves,
    write_csv,
)


def fake_metric_rows(n=50):
    rng = np.random.default_rng(0)
    return [
        dict(step=i + 1, l_all=float(2 / (i + 1) + rng.random() * 0.1),
             l_t=float(1 / (i + 1)), l_m=float(1 / (i + 1)),
             dv_ts=float(0.1 * i / n), dv_tt=float(0.08 * i / n), lr=1e-3)
        for i in range(n)
    ]


def test_training_curves_png(tmp_path):
    out = tmp_path / "curves.png"
    render_training_curves(fake_metric_rows(), out)
    assert out.stat().st_size > 1000


def test_mi_sanity_png(tmp_path):
    rows = [(i + 1, 0.4 + 0.01 * np.sin(i / 5), 0.5108) for i in range(200)]
    out = tmp_path / "mi.png"
    render_mi_sanity(rows, 0.5108, out)
    assert out.stat().st_size > 1000


def test_sweep_png_and_csv(tmp_path):
    rows = [
        dict(segment_size=6, map_slots=5, accuracy=0.8, final_l_all=0.4,
             final_dv_ts=0.2, final_dv_tt=0.1, steps=300, seconds=4.0),
        dict(segment_size=12, map_slots=10, accuracy=0.9, final_l_all=0.3,
             final_dv_ts=0.25, final_dv_tt=0.2, steps=300, seconds=5.0),
    ]
    png = tmp_path / "sweep.png"
    render_sweep(rows, png)
    assert png.stat().st_size > 1000
    csv_path = tmp_path / "sweep.csv"
    write_csv(csv_path, ("segment_size", "map_slots", "accuracy"), rows)
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "segment_size,map_slots,accuracy"
    assert len(lines) == 3


def test_write_csv_roundtrip_precision(tmp_path):
    value = 0.1234567890123456789
    path = tmp_path / "x.csv"
    write_csv(path, ("a",), [{"a": value}])
    line = path.read_text().splitlines()[1]
    assert float(line) == value
