"""Regenerate the shipped world files and co-runner traces.

    python tools/make_worlds.py

Device peak powers and V/F step counts follow the published handset
specifications; everything else (per-step power curve, MAC throughput,
radio figures, cloud and tablet compute) is synthetic.
"""

from pathlib import Path

import numpy as np
import yaml

OUT = Path(__file__).resolve().parents[1] / "src" / "infersched" / "worlds"

HEADER = """\
# {title}
#
# Peak CPU/GPU/DSP power and V/F step counts mirror the handset spec sheet.
# Busy power per step follows p_static + (p_peak - p_static) * (f / f_max)^3.
# MAC throughput, radio bins, the connected tablet and the cloud server are
# synthetic: no published power or throughput figures exist for them.
# The cloud is modelled with free compute energy; only the handset's radio
# and idle energy count against an offloaded inference.
"""


def vf_table(f_max_ghz, steps, p_peak, p_static, f_min_frac):
    freqs = np.linspace(f_min_frac, 1.0, steps)
    rows = []
    for x in freqs:
        f = round(float(x * f_max_ghz * 1e9), -5)
        p = round(float(p_static + (p_peak - p_static) * x**3), 4)
        rows.append([f, p])
    rows[-1][1] = p_peak
    return rows


def radio(kind, regular, weak):
    return {
        "kind": kind,
        "bins": [
            {"min_dbm": -80.0, "max_dbm": 0.0, **regular},
            {"min_dbm": None, "max_dbm": -80.0, **weak},
        ],
    }


WLAN = radio(
    "WLAN",
    {"tx_power_w": 3.5, "rx_power_w": 1.2, "rate_bytes_s": 6.0e6},
    {"tx_power_w": 4.0, "rx_power_w": 1.4, "rate_bytes_s": 0.75e6},
)
P2P = radio(
    "P2P",
    {"tx_power_w": 2.0, "rx_power_w": 0.9, "rate_bytes_s": 3.0e6},
    {"tx_power_w": 2.6, "rx_power_w": 1.1, "rate_bytes_s": 0.4e6},
)


def cpu(f_max, steps, p_peak, p_static, gmacs, cores=4, idle=0.15):
    return {
        "kind": "CPU", "core_count": cores, "peak_gmacs": gmacs, "idle_power_w": idle,
        "supported_precisions": ["FP32", "INT8"],
        "vf_steps": vf_table(f_max, steps, p_peak, p_static, 0.125),
    }


def gpu(f_max, steps, p_peak, p_static, gmacs, idle=0.1):
    return {
        "kind": "GPU", "core_count": 1, "peak_gmacs": gmacs, "idle_power_w": idle,
        "supported_precisions": ["FP32", "FP16"],
        "vf_steps": vf_table(f_max, steps, p_peak, p_static, 0.25),
    }


def dsp(power, gmacs, f_ghz=1.0):
    return {
        "kind": "DSP", "core_count": 1, "peak_gmacs": gmacs, "idle_power_w": 0.0,
        "dsp_power_w": power, "supported_precisions": ["INT8"],
        "vf_steps": [[f_ghz * 1e9, power]],
    }


TABLET = {
    "name": "galaxy-tab-s6",
    "dram_bandwidth_gbs": 34.1,
    "processors": [cpu(2.84, 20, 5.8, 0.9, 24.0), gpu(0.7, 7, 3.0, 1.5, 40.0), dsp(1.9, 24.0)],
}

CLOUD = {
    "name": "xeon-p100-server",
    "free_compute_energy": True,
    "dram_bandwidth_gbs": 732.0,
    "processors": [
        {"kind": "CPU", "core_count": 40, "peak_gmacs": 300.0, "idle_power_w": 0.0,
         "supported_precisions": ["FP32"], "vf_steps": [[2.4e9, 1.0]]},
        {"kind": "GPU", "core_count": 1, "peak_gmacs": 2000.0, "idle_power_w": 0.0,
         "supported_precisions": ["FP32", "FP16"], "vf_steps": [[1.3e9, 1.0]]},
    ],
}

IMAGE_224 = 224 * 224 * 3
IMAGE_299 = 299 * 299 * 3
IMAGE_300 = 300 * 300 * 3
CLASSES_OUT = 1001 * 4
DETECT_OUT = 1917 * 4


def acc(fp32, fp16, cpu_int8, dsp_int8):
    return {
        "CPU": {"FP32": fp32, "INT8": cpu_int8},
        "GPU": {"FP32": fp32, "FP16": fp16},
        "DSP": {"INT8": dsp_int8},
        "cloud": {"FP32": fp32},
        "connected_edge": {"FP32": fp32},
    }


def nn(name, conv, fc, rc, macs, inp, out, qos, accuracy, req=0.5):
    return {
        "name": name, "conv_layers": conv, "fc_layers": fc, "rc_layers": rc,
        "mac_count_millions": macs, "input_bytes": inp, "output_bytes": out,
        "qos_target_s": qos, "accuracy_requirement": req, "accuracy": accuracy,
    }


NNS = [
    nn("InceptionV1", 49, 1, 0, 1500.0, IMAGE_224, CLASSES_OUT, 0.05, acc(0.698, 0.697, 0.641, 0.62)),
    nn("InceptionV3", 94, 1, 0, 5700.0, IMAGE_299, CLASSES_OUT, 0.05, acc(0.779, 0.778, 0.75, 0.74)),
    nn("MobilenetV1", 14, 1, 0, 569.0, IMAGE_224, CLASSES_OUT, 0.05, acc(0.709, 0.708, 0.68, 0.66)),
    nn("MobilenetV2", 35, 1, 0, 300.0, IMAGE_224, CLASSES_OUT, 0.05, acc(0.718, 0.717, 0.69, 0.45)),
    nn("MobilenetV3", 23, 20, 0, 220.0, IMAGE_224, CLASSES_OUT, 0.05, acc(0.752, 0.75, 0.735, 0.58)),
    nn("Resnet50", 53, 1, 0, 4100.0, IMAGE_224, CLASSES_OUT, 0.05, acc(0.761, 0.76, 0.75, 0.74)),
    nn("SSD-MobilenetV1", 19, 1, 0, 1200.0, IMAGE_300, DETECT_OUT, 0.05, acc(0.21, 0.21, 0.2, 0.19), 0.15),
    nn("SSD-MobilenetV2", 52, 1, 0, 800.0, IMAGE_300, DETECT_OUT, 0.05, acc(0.22, 0.22, 0.21, 0.2), 0.15),
    nn("SSD-MobilenetV3", 28, 20, 0, 1050.0, IMAGE_300, DETECT_OUT, 0.05, acc(0.226, 0.225, 0.21, 0.2), 0.15),
    nn("MobileBERT", 0, 1, 24, 2400.0, 512, 512, 0.1, acc(0.9, 0.899, 0.88, 0.87)),
]


def snap(cpu=0.0, mem=0.0, wlan=-60.0, p2p=-60.0):
    return {"co_cpu_util": cpu, "co_mem_util": mem, "rssi_wlan_dbm": wlan, "rssi_p2p_dbm": p2p}


SCENARIOS = [
    {"id": "S1", "description": "no runtime variance", "constant": snap()},
    {"id": "S2", "description": "CPU-intensive co-running app", "constant": snap(cpu=0.9)},
    {"id": "S3", "description": "memory-intensive co-running app", "constant": snap(mem=0.9)},
    {"id": "S4", "description": "weak Wi-Fi signal", "constant": snap(wlan=-85.0)},
    {"id": "S5", "description": "weak Wi-Fi Direct signal", "constant": snap(p2p=-85.0)},
    {"id": "D1", "description": "co-running music player", "trace_file": "d1_music_player.csv",
     "period": 1, "base": snap()},
    {"id": "D2", "description": "co-running web browser", "trace_file": "d2_web_browser.csv",
     "period": 1, "base": snap()},
    {"id": "D3", "description": "random Wi-Fi signal strength", "base": snap(),
     "gaussian_rssi": {"mean_dbm": -75.0, "stddev_dbm": 10.0, "interface": "WLAN"}},
]


def world(name, title, cpu_spec, gpu_spec, dsp_spec=None, dram=29.9):
    procs = [cpu_spec, gpu_spec] + ([dsp_spec] if dsp_spec else [])
    doc = {
        "schema_version": 1,
        "name": name,
        "seed": 20210301,
        "model": {
            "cpu_contention": 0.6,
            "mem_contention": 0.5,
            "precision_speedup": {"FP32": 1.0, "FP16": 1.5, "INT8": 2.0},
            "layer_affinity": {"GPU": {"fc": 0.02, "rc": 0.05}, "DSP": {"fc": 0.05, "rc": 0.1}},
        },
        "edge": {"name": name, "dram_bandwidth_gbs": dram, "processors": procs, "interfaces": [WLAN, P2P]},
        "connected_edge": TABLET,
        "cloud": CLOUD,
        "nns": NNS,
        "scenarios": SCENARIOS,
    }
    text = yaml.safe_dump(doc, sort_keys=False, default_flow_style=None, width=110)
    (OUT / f"{name}.world").write_text(HEADER.format(title=title) + text)


def traces():
    rng = np.random.default_rng(7)
    n = 120
    # music player: light, steady decode load with periodic buffer refills
    t = np.arange(n)
    cpu = np.clip(0.07 + 0.03 * np.sin(t / 6.0) + rng.normal(0, 0.01, n), 0.02, 0.2)
    mem = np.clip(0.12 + 0.04 * (t % 20 < 4) + rng.normal(0, 0.01, n), 0.05, 0.22)
    _write_trace("d1_music_player.csv", cpu, mem)
    # web browser: bursts on page loads, idle while reading
    cpu, mem = np.zeros(n), np.zeros(n)
    level_c, level_m = 0.1, 0.35
    for i in range(n):
        if i % 15 == 0:
            level_c = rng.uniform(0.5, 0.95)
            level_m = rng.uniform(0.5, 0.85)
        else:
            level_c = max(0.05, level_c * 0.82)
            level_m = max(0.3, level_m * 0.95)
        cpu[i] = min(1.0, level_c + abs(rng.normal(0, 0.03)))
        mem[i] = min(1.0, level_m + abs(rng.normal(0, 0.02)))
    _write_trace("d2_web_browser.csv", cpu, mem)


def _write_trace(name, cpu, mem):
    lines = ["step,co_cpu_util,co_mem_util"]
    lines += [f"{i},{c:.3f},{m:.3f}" for i, (c, m) in enumerate(zip(cpu, mem))]
    (OUT / name).write_text("\n".join(lines) + "\n")


if __name__ == "__main__":
    OUT.mkdir(parents=True, exist_ok=True)
    world("mi8pro", "Xiaomi Mi8Pro: Cortex-A75 2.8 GHz / 23 steps (5.5 W), Adreno 630 0.7 GHz / 7 steps "
          "(2.8 W), Hexagon 685 (1.8 W)",
          cpu(2.8, 23, 5.5, 0.9, 20.0), gpu(0.7, 7, 2.8, 1.5, 30.0), dsp(1.8, 21.0))
    world("s10e", "Samsung Galaxy S10e: Mongoose 2.7 GHz / 21 steps (5.6 W), Mali-G76 0.7 GHz / 9 steps "
          "(2.4 W), no DSP",
          cpu(2.7, 21, 5.6, 0.95, 22.0), gpu(0.7, 9, 2.4, 1.3, 28.0))
    world("motox", "Motorola Moto X Force: Cortex-A57 1.9 GHz / 15 steps (3.6 W), Adreno 430 0.6 GHz / "
          "6 steps (2.0 W), no DSP",
          cpu(1.9, 15, 3.6, 0.7, 8.0), gpu(0.6, 6, 2.0, 1.1, 8.0), dram=14.9)
    traces()
