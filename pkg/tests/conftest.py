import pytest

AA = "aa" * 20
BB = "bb" * 20
CC = "cc" * 20
DD = "dd" * 20

KEY1 = "11" * 16
KEY2 = "22" * 16


def static_beacon(ref, x, id_hex, tx=-59.0, interval=1000.0, **extra):
    return {"ref": ref, "x": x, "y": 0, "tx_power_1m": tx,
            "adv_interval_ms": interval, "id_hex": id_hex, **extra}


def ephemeral_beacon(ref, x, key_hex, tx=-59.0, interval=1000.0, **extra):
    return {"ref": ref, "x": x, "y": 0, "tx_power_1m": tx,
            "adv_interval_ms": interval, "id_mode": "ephemeral", "key_hex": key_hex,
            **extra}


@pytest.fixture
def static_doc():
    return {
        "beacons": [static_beacon("b1", 0, AA), static_beacon("b2", 20, BB)],
        "content": [
            {"id_hex": AA, "locator": "app://one", "label": "one"},
            {"id_hex": BB, "locator": "app://two"},
        ],
        "adjacency_radius_m": 25,
    }


@pytest.fixture
def ephemeral_doc():
    return {
        "beacons": [ephemeral_beacon("b1", 0, KEY1), ephemeral_beacon("b2", 20, KEY2)],
        "content": [
            {"ref": "b1", "locator": "app://one"},
            {"ref": "b2", "locator": "app://two"},
        ],
        "adjacency_radius_m": 25,
    }
