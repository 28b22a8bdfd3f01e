"""End-to-end command-line flows on small synthetic inputs."""
from __future__ import annotations

import json
import struct

import pytest

from cogload import forest, synth
from cogload.cli import main
from cogload.features import read_features_csv
from cogload.ingest import encode_frame, read_csv, write_csv


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    """One shared pipeline run: simulate -> featurize -> clean -> train ->
    classify, plus an exam-stream classification for the stats commands."""
    d = tmp_path_factory.mktemp("cli")
    p = {
        "synth": str(d / "synth.csv"),
        "feats": str(d / "features.csv"),
        "clean": str(d / "clean.csv"),
        "clean_report": str(d / "clean_report.json"),
        "model": str(d / "model.cglf"),
        "cv": str(d / "cv.json"),
        "pred": str(d / "pred.csv"),
        "report": str(d / "report.json"),
        "exam": str(d / "exam.csv"),
        "exam_pred": str(d / "exam_pred.csv"),
        "dir": d,
    }
    assert main(["simulate", "--participants", "2", "--rounds", "1",
                 "--seed", "7", "--out", p["synth"]]) == 0
    assert main(["featurize", "--in", p["synth"], "--out", p["feats"],
                 "--truncate", "3"]) == 0
    assert main(["clean", "--in", p["feats"], "--out", p["clean"],
                 "--report", p["clean_report"]]) == 0
    assert main(["train", "--in", p["clean"], "--model", p["model"],
                 "--trees", "10"]) == 0
    assert main(["cv", "--in", p["feats"], "--out", p["cv"],
                 "--trees", "5"]) == 0
    assert main(["classify", "--model", p["model"], "--in", p["synth"],
                 "--out", p["pred"], "--report-out", p["report"]]) == 0
    write_csv(list(synth.generate_exam_stream(60, 40, seed=11)), p["exam"])
    assert main(["classify", "--model", p["model"], "--in", p["exam"],
                 "--out", p["exam_pred"]]) == 0
    return p


def test_simulate_output_parses(work):
    recs = read_csv(work["synth"])
    assert len(recs) == 2 * 260
    assert len({r.participant_id for r in recs}) == 2


def test_featurize_truncates_each_block(work):
    rows = read_features_csv(work["feats"])
    # three task blocks per participant lose three ticks each
    assert len(rows) == 2 * (260 - 9)


def test_clean_report_and_output(work):
    rows = read_features_csv(work["clean"])
    report = json.load(open(work["clean_report"]))
    assert {"kept_indices", "removed_indices"} <= set(report)
    assert len(rows) == len(report["kept_indices"])
    assert len(rows) + len(report["removed_indices"]) == 2 * (260 - 9)


def test_train_writes_loadable_model(work):
    model = forest.load(work["model"])
    assert model.n_features == 9
    assert model.config.n_estimators == 10
    assert model.config.random_state == 24   # CLI default


def test_cv_report_shape(work):
    cv = json.load(open(work["cv"]))
    assert set(cv) == {"mean_accuracy", "std_accuracy", "folds"}
    assert len(cv["folds"]) == 2
    assert 0.0 <= cv["mean_accuracy"] <= 1.0


def test_classify_outputs(work):
    lines = open(work["pred"]).read().splitlines()
    assert lines[0].startswith("participant,round,task,tick,a_delta")
    assert len(lines) == 1 + 2 * 260
    report = json.load(open(work["report"]))
    assert "accuracy" in report["report"]


def test_report_text_and_json(work, tmp_path, capsys):
    assert main(["report", "--pred", work["pred"]]) == 0
    out = capsys.readouterr().out
    assert "precision" in out and "Baseline" in out
    path = str(tmp_path / "rep.json")
    assert main(["report", "--pred", work["pred"], "--format", "json",
                 "--out", path]) == 0
    rep = json.load(open(path))
    assert "accuracy" in rep and "confusion" in rep


def test_stats_kruskal(work, tmp_path):
    path = str(tmp_path / "kw.json")
    assert main(["stats", "kruskal", "--in", work["feats"], "--out", path]) == 0
    kw = json.load(open(path))
    assert kw["groups"] == ["Baseline", "Low", "High"]
    assert set(kw["features"]) == {"a_delta", "a_theta", "a_low_alpha",
                                   "a_high_alpha", "a_low_beta", "a_high_beta",
                                   "a_low_gamma", "a_middle_gamma", "hrv"}
    assert kw["features"]["a_delta"]["p_value"] < 1e-6


def test_stats_chi2_and_ratios(work, tmp_path):
    chi = str(tmp_path / "chi.json")
    assert main(["stats", "chi2", "--in", work["exam_pred"], "--out", chi]) == 0
    data = json.load(open(chi))
    assert data["rows"] == ["Low", "High"]
    assert sum(data["table"][0]) == 60 and sum(data["table"][1]) == 40
    assert 0.0 <= data["p_value"] <= 1.0

    ratios = str(tmp_path / "ratios.json")
    assert main(["stats", "ratios", "--in", work["exam_pred"], "--out", ratios]) == 0
    r = json.load(open(ratios))
    assert set(r) == {"Low", "High"}
    for row in r.values():
        assert sum(row.values()) == pytest.approx(100.0)


def test_stats_trend_with_svg(work, tmp_path):
    out = str(tmp_path / "trend.json")
    svg = str(tmp_path / "trend.svg")
    assert main(["stats", "trend", "--in", work["exam_pred"], "--out", out,
                 "--svg", svg]) == 0
    trend = json.load(open(out))
    assert set(trend) == {"Low", "High"}
    assert trend["Low"]["n_ticks"] == 60
    assert open(svg).read().startswith("<svg")


def test_stats_tukey(tmp_path):
    src = str(tmp_path / "groups.csv")
    with open(src, "w") as fh:
        fh.write("group,value\n")
        for name, vals in (("a", (1.0, 2.0, 3.0)), ("b", (5.0, 6.0, 7.0)),
                           ("c", (1.5, 2.5, 3.5))):
            for v in vals:
                fh.write(f"{name},{v}\n")
    out = str(tmp_path / "tukey.json")
    assert main(["stats", "tukey", "--in", src, "--out", out]) == 0
    res = json.load(open(out))
    assert res["names"] == ["a", "b", "c"]
    assert res["p_value"][0][1] < 0.05


def test_ingest_binary_capture(tmp_path):
    cap = str(tmp_path / "capture.bin")
    blob = b""
    for sec in range(4):
        blob += encode_frame(bytes([0x02, 20]))
        blob += encode_frame(bytes([0x80, 3, 0x20]))  # r-r 800 ms
        blob += encode_frame(bytes([0x83]) + struct.pack(">8I", *([sec + 1] * 8)))
    open(cap, "wb").write(blob)
    out = str(tmp_path / "session.csv")
    assert main(["ingest", "--in", cap, "--out", out, "--participant", "B1",
                 "--round", "2", "--task", "Rest"]) == 0
    recs = read_csv(out)
    assert len(recs) == 4
    assert recs[0].participant_id == "B1" and recs[0].round == 2
    assert recs[1].rr_intervals == [800.0]


def test_simulate_profile_options(tmp_path):
    # --dump-profiles writes the default profile JSON and exits
    dump = str(tmp_path / "profiles.json")
    assert main(["simulate", "--dump-profiles", dump,
                 "--out", str(tmp_path / "unused.csv")]) == 0
    profs = json.load(open(dump))
    assert set(profs) == {"Baseline", "Low", "High"}
    assert profs["Baseline"] != profs["High"]

    # the dumped file feeds back in through --profiles
    custom = str(tmp_path / "custom.csv")
    assert main(["simulate", "--participants", "1", "--rounds", "1",
                 "--out", custom, "--profiles", dump]) == 0
    assert len(read_csv(custom)) == 260

    flat = str(tmp_path / "flat.csv")
    assert main(["simulate", "--participants", "1", "--rounds", "1",
                 "--out", flat, "--flat"]) == 0
    assert len(read_csv(flat)) == 260


def test_simulate_outlier_injection(tmp_path):
    out = str(tmp_path / "dirty.csv")
    assert main(["simulate", "--participants", "1", "--rounds", "1",
                 "--out", out, "--inject-outliers", "0.05"]) == 0
    assert len(read_csv(out)) == 260


def test_missing_input_exits_2(tmp_path):
    assert main(["featurize", "--in", str(tmp_path / "nope.csv"),
                 "--out", str(tmp_path / "x.csv")]) == 2


def test_schema_mismatch_exits_2(tmp_path):
    bad = str(tmp_path / "bad.csv")
    with open(bad, "w") as fh:
        fh.write("a,b\n1,2\n")
    assert main(["featurize", "--in", bad, "--out", str(tmp_path / "x.csv")]) == 2
    assert main(["stats", "tukey", "--in", bad,
                 "--out", str(tmp_path / "t.json")]) == 2


def test_bad_value_exits_2(tmp_path, work):
    lines = open(work["synth"]).read().splitlines()
    cells = lines[1].split(",")
    cells[4] = "999"  # quality outside 0..200
    lines[1] = ",".join(cells)
    bad = str(tmp_path / "badval.csv")
    open(bad, "w").write("\n".join(lines) + "\n")
    assert main(["featurize", "--in", bad, "--out", str(tmp_path / "x.csv")]) == 2
