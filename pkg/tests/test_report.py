from mmdm.evaluation import MetricsReport, MetricsValue
from mmdm.losses import LossBreakdown
from mmdm.report import (
    ABLATION_COLUMNS,
    format_ablation_table,
    plot_ablation,
    plot_loss_curve,
    plot_metrics,
    read_metrics_tsv,
    write_ablation_tsv,
    write_metrics_tsv,
)


def _report(multimodality=MetricsValue(1.5, 0.2)):
    return MetricsReport(
        fid=MetricsValue(0.25, 0.01),
        r_precision_top1=MetricsValue(0.5, 0.02),
        r_precision_top2=MetricsValue(0.7, 0.02),
        r_precision_top3=MetricsValue(0.8, 0.01),
        mm_dist=MetricsValue(3.1, 0.05),
        diversity=MetricsValue(9.2, 0.1),
        multimodality=multimodality,
    )


def test_metrics_tsv_round_trip(tmp_path):
    report = _report()
    path = tmp_path / "metrics.tsv"
    write_metrics_tsv(report, path)
    assert read_metrics_tsv(path) == report


def test_metrics_tsv_round_trip_without_multimodality(tmp_path):
    report = _report(multimodality=None)
    path = tmp_path / "metrics.tsv"
    write_metrics_tsv(report, path)
    back = read_metrics_tsv(path)
    assert back.multimodality is None
    assert back.fid == report.fid


def test_metrics_figure_written(tmp_path):
    path = tmp_path / "metrics.png"
    plot_metrics(_report(), path)
    assert path.exists() and path.stat().st_size > 0


def _rows():
    return [
        {"variant": "0.1", "fid": 0.3, "r_precision_top3": 0.7, "mm_dist": 3.0,
         "diversity": 9.0, "multimodality": 2.0, "error": ""},
        {"variant": "0.2", "error": "NumericFailureError: boom"},
    ]


def test_ablation_tsv_columns(tmp_path):
    path = tmp_path / "ablation.tsv"
    write_ablation_tsv(_rows(), path)
    lines = path.read_text().strip().splitlines()
    assert lines[0].split("\t") == list(ABLATION_COLUMNS)
    assert len(lines) == 3
    assert lines[2].startswith("0.2\t")
    assert "boom" in lines[2]


def test_ablation_figure_written(tmp_path):
    path = tmp_path / "ablation.png"
    plot_ablation(_rows(), path)
    assert path.exists() and path.stat().st_size > 0


def test_format_ablation_table_contains_labels():
    text = format_ablation_table(_rows())
    assert "variant" in text and "0.1" in text and "0.2" in text


def test_loss_curve_from_history(tmp_path):
    history = [
        LossBreakdown(simple=1.0 / (i + 1), pos=0.5, foot=0.1, vel=0.2, total=2.0 / (i + 1))
        for i in range(10)
    ]
    path = tmp_path / "loss.png"
    plot_loss_curve(history, path)
    assert path.exists() and path.stat().st_size > 0


def test_loss_curve_from_jsonl(tmp_path):
    log = tmp_path / "log.jsonl"
    log.write_text(
        '{"step": 1, "simple": 1.0, "pos": 0.5, "foot": 0.1, "vel": 0.2, "total": 1.8}\n'
        '{"step": 2, "simple": 0.8, "pos": 0.4, "foot": 0.1, "vel": 0.2, "total": 1.5}\n'
    )
    path = tmp_path / "loss.png"
    plot_loss_curve(log, path)
    assert path.exists() and path.stat().st_size > 0
