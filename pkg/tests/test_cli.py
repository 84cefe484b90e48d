import ipaddress
import json

import numpy as np
import pytest

from genai_traffic.cli import main
from genai_traffic.fixtures import three_packet_trace
from genai_traffic.flows import Content, LabelMap, save_label_map, sidecar_path
from genai_traffic.markov import MarkovModel
from genai_traffic.pcapio import IpProto, read_capture, write_capture
from genai_traffic.reports import read_csv, read_json

from .conftest import T0, rec

S = ("203.0.113.10", 443)


def write_labeled(path, packets, app="app.x", content=Content.TEXT, server=S):
    write_capture(packets, path)
    save_label_map(LabelMap({(ipaddress.ip_address(server[0]), server[1]): app}, app, content), sidecar_path(path))
    return path


def outputs(out_dir):
    return {p.relative_to(out_dir).as_posix(): p.read_bytes()
            for p in sorted(out_dir.rglob("*")) if p.is_file() and p.name != "manifest.json"}


def test_characterize_three_packets(tmp_path):
    cap = write_labeled(tmp_path / "three.pcap", three_packet_trace(T0))
    out = tmp_path / "out"
    assert main(["characterize", str(cap), "--out", str(out)]) == 0
    rates = read_csv(out / "fig2_rates.csv")
    assert [(r["window"], r["up_bytes"], r["down_bytes"]) for r in rates] == [("1", "100", "500"), ("3", "0", "200")]
    prof = read_csv(out / "fig7_profiles.csv")
    assert [(r["up_bytes"], r["down_bytes"]) for r in prof] == [("100", "500"), ("0", "0"), ("0", "200")]
    (row,) = read_csv(out / "table1_summary.csv")
    assert row["biflows"] == "1" and row["volume_bytes"] == "800"
    manifest = json.loads((out / "manifest.json").read_text())
    first_line = (out / "fig2_rates.csv").read_text().splitlines()[0]
    assert first_line == f"# manifest=manifest.json run_id={manifest['run_id']}"
    assert manifest["inputs"] and all(len(d) == 64 for d in manifest["inputs"].values())


def test_missing_labels(tmp_path, capsys):
    cap = tmp_path / "bare.pcap"
    write_capture(three_packet_trace(T0), cap)
    assert main(["characterize", str(cap), "--out", str(tmp_path / "o1"), "--require-labels"]) == 2
    assert "missing label file" in capsys.readouterr().err
    # without the flag the capture is kept as unknown and the run warns
    assert main(["characterize", str(cap), "--out", str(tmp_path / "o2")]) == 1
    assert "no label file for bare.pcap" in capsys.readouterr().err
    (row,) = read_csv(tmp_path / "o2" / "table1_summary.csv")
    assert row["app"] == "UNK"


def test_empty_directory(tmp_path, capsys):
    (tmp_path / "empty").mkdir()
    assert main(["characterize", str(tmp_path / "empty"), "--out", str(tmp_path / "o")]) == 2
    assert "no captures found" in capsys.readouterr().err


def _markov_input(tmp_path):
    rng = np.random.default_rng(0)
    pkts = []
    t = T0
    for f in range(20):
        c = ("10.0.0.2", 40000 + f)
        for i in range(60):
            t += 1000
            up = rng.random() < 0.3
            size = int(rng.choice([90, 600, 1400]))
            pkts.append(rec(t, c if up else S, S if up else c, bytes(size)))
    (tmp_path / "m").mkdir()
    return write_labeled(tmp_path / "m" / "chat.pcap", pkts)


def test_markov_fit_generate_refit(tmp_path):
    cap = _markov_input(tmp_path)
    out = tmp_path / "fit"
    assert main(["markov", "fit", str(cap), "--k", "3", "--out", str(out)]) == 0
    model_path = out / "markov" / "app.x_TEXT.json"
    model = MarkovModel.load(model_path)
    assert read_csv(out / "fig4_matrix.csv")

    gen = tmp_path / "gen"
    assert main(["markov", "generate", str(model_path), "--length", "20000", "--seed", "3", "--out", str(gen)]) == 0
    trace = read_capture(gen / "synthetic.pcap")
    assert sum(1 for p in trace.packets if p.payload_len > 0) == 20000
    write_labeled(tmp_path / "regen.pcap", list(trace.packets), server=("203.0.113.250", 443))
    refit = tmp_path / "refit"
    assert main(["markov", "fit", str(tmp_path / "regen.pcap"), "--k", "3", "--out", str(refit)]) == 0
    again = MarkovModel.load(refit / "markov" / "app.x_TEXT.json")
    assert np.allclose(again.binning.centroids, model.binning.centroids)
    visits = again.counts.sum(axis=1)
    rows = visits >= 500
    # four standard errors per cell, summed over the row
    P = model.transition[rows]
    bound = (4 * np.sqrt(P * (1 - P) / visits[rows, None])).sum(axis=1)
    assert (np.abs(again.transition[rows] - P).sum(axis=1) <= bound).all()

    gen2 = tmp_path / "gen2"
    main(["markov", "generate", str(model_path), "--length", "20000", "--seed", "3", "--out", str(gen2)])
    assert outputs(gen) == outputs(gen2)


def test_markov_generate_length_zero(tmp_path):
    cap = _markov_input(tmp_path)
    out = tmp_path / "fit"
    main(["markov", "fit", str(cap), "--k", "3", "--out", str(out)])
    gen = tmp_path / "gen"
    assert main(["markov", "generate", str(out / "markov" / "app.x_TEXT.json"), "--length", "0",
                 "--out", str(gen)]) == 0
    assert len((gen / "synthetic.pcap").read_bytes()) == 24


def test_dissect_published_initial(tmp_path, rfc_vectors):
    pkt = bytes.fromhex(rfc_vectors["long_client_encrypted_packet"])
    cap = write_labeled(tmp_path / "quic.pcap", [rec(T0, ("10.0.0.2", 50000), S, pkt, proto=IpProto.UDP)])
    out = tmp_path / "o"
    assert main(["dissect", str(cap), "--out", str(out)]) == 0
    flows = read_csv(out / "flows_dissect.csv")
    assert len(flows) == 1 and flows[0]["protocol"] == "UDP:QUIC_TLS"
    mix = {r["protocol"]: float(r["biflow_pct"]) for r in read_csv(out / "fig5_protocols.csv")}
    assert mix["UDP:QUIC_TLS"] == 100.0
    (sni,) = read_csv(out / "table2_sni.csv")
    assert sni["sni"] == "example.com" and sni["via_quic"] == "True"


def test_dissect_plain_udp(tmp_path):
    assert main(["fixtures", "make", "--kind", "protocol", "--out", str(tmp_path / "fx")]) == 0
    out = tmp_path / "o"
    assert main(["dissect", str(tmp_path / "fx" / "protocol" / "plain_udp.pcap"), "--out", str(out)]) == 0
    mix = {r["protocol"]: float(r["biflow_pct"]) for r in read_csv(out / "fig5_protocols.csv")}
    assert mix == {"TCP:TLS": 0.0, "TCP:UNK": 0.0, "UDP:QUIC_TLS": 0.0, "UDP:UNK": 100.0}


def _no_sni_dataset(root, apps):
    root.mkdir(parents=True)
    rng = np.random.default_rng(len(apps))
    for a, app in enumerate(apps):
        server = (f"203.0.113.{20 + a}", 8080)
        pkts = []
        for f in range(10):
            c = ("10.0.0.2", 30000 + f)
            body = bytes([a + 1]) * 40 + rng.bytes(int(rng.integers(20, 200)))
            pkts.append(rec(T0 + f * 1000, c, server, body))
        write_labeled(root / f"{app}.pcap", pkts, app=app, server=server)
    return root


def test_classify_occlude_without_sni_and_mismatch(tmp_path):
    ds = _no_sni_dataset(tmp_path / "ds", ["app.a", "app.b"])
    out = tmp_path / "o"
    common = ["--out", str(out), "--seeds", "0", "1", "--epochs", "2", "--batch", "8"]
    assert main(["classify", "train", str(ds)] + common) == 0
    assert sorted(p.name for p in (out / "checkpoints").iterdir()) == ["APP_seed0.npz", "APP_seed1.npz"]
    assert main(["classify", "occlude", str(ds), "--out", str(out)]) == 0
    doc = read_json(out / "occlusion_APP.json")
    assert doc["delta"]["macro_f1_delta"] == 0
    assert all(v == 0 for v in doc["delta"]["recall_delta"])
    assert all(v == 0 for row in doc["delta"]["confusion_shift"] for v in row)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["counters"]["occlusion.masked"] == 0
    assert main(["classify", "eval", str(ds), "--out", str(out)]) == 0
    assert read_json(out / "eval_APP.json")["runs"]

    other = _no_sni_dataset(tmp_path / "ds3", ["app.a", "app.b", "app.c"])
    ckpts = [str(p) for p in sorted((out / "checkpoints").iterdir())]
    assert main(["classify", "eval", str(other), "--out", str(tmp_path / "o3"), "--checkpoints", *ckpts]) == 2
    assert main(["classify", "eval", str(ds), "--out", str(tmp_path / "none")]) == 2


def test_config_precedence(tmp_path):
    cap = write_labeled(tmp_path / "three.pcap", three_packet_trace(T0))
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"delta": 2.0, "seed": 9}))
    out = tmp_path / "a"
    assert main(["characterize", str(cap), "--config", str(cfg), "--out", str(out)]) == 0
    m = json.loads((out / "manifest.json").read_text())
    assert m["config"]["delta"] == 2.0 and m["config"]["seed"] == 9 and m["config"]["n"] == 50
    out = tmp_path / "b"
    assert main(["characterize", str(cap), "--config", str(cfg), "--delta", "0.5", "--out", str(out)]) == 0
    m = json.loads((out / "manifest.json").read_text())
    assert m["config"]["delta"] == 0.5 and m["config"]["seed"] == 9
    cfg.write_text(json.dumps({"bogus": 1}))
    assert main(["characterize", str(cap), "--config", str(cfg), "--out", str(tmp_path / "c")]) == 2
    assert main(["characterize", str(cap), "--delta", "0", "--out", str(tmp_path / "d")]) == 2


def test_reports_regenerate_bit_identically(tmp_path):
    assert main(["fixtures", "make", "--kind", "protocol", "--out", str(tmp_path / "fx")]) == 0
    runs = []
    for name in ("r1", "r2"):
        out = tmp_path / name
        assert main(["characterize", str(tmp_path / "fx" / "protocol"), "--out", str(out)]) == 0
        assert main(["dissect", str(tmp_path / "fx" / "protocol"), "--out", str(out)]) == 0
        runs.append(outputs(out))
    assert runs[0] == runs[1]
    assert len(runs[0]) >= 9
    # parallel reading changes the recorded config, not the report rows
    par = tmp_path / "par"
    assert main(["characterize", str(tmp_path / "fx" / "protocol"), "--out", str(par), "--jobs", "2"]) == 0
    for name in ("table1_summary.csv", "fig2_rates.csv", "fig3_series.csv"):
        assert read_csv(par / name) == read_csv(tmp_path / "r1" / name)
