from typing import Any, Dict

TURBOREG_CONFIG_FIXTURE: Dict[str, Any] = {
    "version": "1",
    "estimator": {
        "type": "turboreg",
        "tau": 0.0125,
        "k1": 1000,
        "k2": 2,
        "inlier_threshold": 0.015,
    },
}

TURBOREG_RESOLUTION_CONFIG_FIXTURE: Dict[str, Any] = {
    "version": "1",
    "estimator": {
        "type": "turboreg",
        "resolution": 0.04,
        "graph_mode": "sc2",
        "workers": 2,
    },
}

RANSAC_CONFIG_FIXTURE: Dict[str, Any] = {
    "version": "1",
    "estimator": {
        "type": "ransac",
        "iterations": 2000,
        "inlier_threshold": 0.015,
        "seed": 7,
    },
}

UNKNOWN_ESTIMATOR_CONFIG_FIXTURE: Dict[str, Any] = {
    "version": "1",
    "estimator": {"type": "teaser", "tau": 0.01},
}

INVALID_K1_CONFIG_FIXTURE: Dict[str, Any] = {
    "version": "1",
    "estimator": {"type": "turboreg", "tau": 0.01, "k1": 0},
}

UNSUPPORTED_VERSION_CONFIG_FIXTURE: Dict[str, Any] = {
    "version": "2",
    "estimator": {"type": "turboreg", "tau": 0.01},
}

# Сцена с 90% выбросов: 1 м, шум 5 мм.
OUTLIER_SYNTH_FIXTURE: Dict[str, Any] = {
    "n": 1000,
    "outlier_ratio": 0.9,
    "noise_sigma": 0.005,
    "extent": 1.0,
}

BENCHMARK_SYNTH_CONFIG_FIXTURE: Dict[str, Any] = {
    "synth_sweep": {
        "n": [500, 1000],
        "outlier_ratio": [0.0],
        "seeds": [0],
    },
    "estimators": [
        {"type": "turboreg", "tau": 0.01, "k1": 100, "k2": 2, "inlier_threshold": 0.01},
    ],
    "omit_timings": True,
}

BENCHMARK_HEAD_TO_HEAD_CONFIG_FIXTURE: Dict[str, Any] = {
    "synth_sweep": {
        "n": [1000],
        "outlier_ratio": [0.9],
        "seeds": [0, 1, 2],
        "noise_sigma": 0.005,
    },
    "estimators": [
        {"type": "turboreg", "tau": 0.0125, "k1": 1000, "k2": 2, "inlier_threshold": 0.015},
        {"type": "ransac", "iterations": 2000, "inlier_threshold": 0.015},
    ],
    "criteria": {"re_max": 2.0, "te_max": 0.03},
    "threads": 2,
}
