import numpy as np
import pytest

from gridseq.errors import ConfigError
from gridseq.powersystem import (Network, PowerSystemSpec, load_system_spec,
    save_system_spec, smib_spec, spec_from_dict)


def two_machine_network():
    lines = [{"from": 0, "to": 1, "r": 0.0, "x": 0.3}]
    return Network(n_bus=2, machine_bus=[0, 1], xd=[0.1, 0.2], loads=[],
        lines=lines)


def test_kron_reduction_series_reactance():
    Y = two_machine_network().reduce()
    y = 1.0/(0.1j + 0.3j + 0.2j)
    assert np.allclose(Y, [[y, -y], [-y, y]], atol=1e-12)


def test_fault_admittances_ground_from_bus_and_remove_lines():
    (Y_fault, Y_post) = two_machine_network().fault_admittances([0])
    assert abs(Y_fault[0,1]) < 1e-12
    assert np.allclose(Y_fault[0,0], 1.0/0.1j)
    assert abs(Y_post[0,1]) < 1e-12
    assert abs(Y_post[0,0]) < 1e-12


def test_bus_admittance_includes_loads_and_charging():
    net = Network(n_bus=2, machine_bus=[0], xd=[0.1],
        loads=[(1, 0.8, 0.2, 1.0)],
        lines=[{"from": 0, "to": 1, "r": 0.01, "x": 0.1, "b": 0.2}])
    Y = net.bus_admittance()
    y = 1.0/complex(0.01, 0.1)
    assert np.isclose(Y[0,0], y + 0.1j)
    assert np.isclose(Y[1,1], y + 0.1j + complex(0.8, -0.2))
    assert np.isclose(Y[0,1], -y)


def test_network_rejects_bad_bus():
    with pytest.raises(ConfigError):
        Network(n_bus=2, machine_bus=[0], xd=[0.1], loads=[],
            lines=[{"from": 0, "to": 5, "x": 0.1}])


def test_bundled_three_machine():
    spec = load_system_spec("three_machine")
    assert spec.n_g == 3 and spec.n_x == 6
    assert np.allclose(spec.Y_pre, spec.Y_pre.T)
    assert spec.fault_lines() == [1, 2, 3, 4, 5, 6]
    (Y_fault, Y_post) = spec.fault_admittances([3])
    assert Y_fault.shape == (3, 3)
    assert not np.allclose(Y_post, spec.Y_pre)


def test_bundled_nine_machine_differs():
    spec = load_system_spec("nine_machine")
    assert spec.n_g == 9
    assert len(spec.fault_lines()) >= 3
    (Y_fault, Y_post) = spec.fault_admittances(spec.fault_lines()[:2])
    assert np.allclose(Y_fault, Y_fault.T)


def test_reduced_form_round_trip(tmp_path):
    spec = load_system_spec("three_machine")
    path = str(tmp_path / "reduced.json")
    save_system_spec(spec, path)
    again = load_system_spec(path)
    assert again.network is None
    assert np.allclose(again.Y_pre, spec.Y_pre, atol=1e-12)
    assert again.fault_lines() == spec.fault_lines()
    for (a, b) in zip(again.fault_admittances([2]),
        spec.fault_admittances([2])):
        assert np.allclose(a, b, atol=1e-12)
    with pytest.raises(ConfigError):
        again.fault_admittances([1, 2])


def test_spec_validation():
    Y = [[0.0, 1j], [1j, 0.0]]
    with pytest.raises(ConfigError):
        PowerSystemSpec(H=[1.0, -1.0], D=[0, 0], Pm=[0, 0], E=[1, 1],
            Y_pre=Y)
    with pytest.raises(ConfigError):
        PowerSystemSpec(H=[1.0, 1.0], D=[0, -0.1], Pm=[0, 0], E=[1, 1],
            Y_pre=Y)
    with pytest.raises(ConfigError):
        PowerSystemSpec(H=[1.0, 1.0], D=[0, 0], Pm=[0, 0], E=[1, 1],
            Y_pre=[[0.0, 1j], [2j, 0.0]])


def test_missing_key_and_unknown_system(tmp_path):
    doc = {"n_g": 1, "H": [1.0], "D": [0.0], "Pm": [0.0]}
    with pytest.raises(ConfigError):
        spec_from_dict(doc)
    with pytest.raises(ConfigError):
        load_system_spec("no_such_system")
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        load_system_spec(str(path))


def test_reduced_document_parsing():
    doc = {"n_g": 2, "H": [5.0, 4.0], "D": [1.0, 1.0], "Pm": [0.5, -0.5],
        "E": [1.0, 1.0],
        "Y_pre": [[[0, -2], [0, 2]], [[0, 2], [0, -2]]],
        "Y_fault_by_line": {"0": [[[0, -5], [0, 0]], [[0, 0], [0, -5]]]},
        "Y_post_by_line": {"0": [[[0, -1], [0, 1]], [[0, 1], [0, -1]]]},
        "omega_s": 314.159}
    spec = spec_from_dict(doc)
    assert spec.fault_lines() == [0]
    assert spec.Y_pre[0,1] == 2j
    assert spec.omega_s == 314.159


def test_smib_spec():
    spec = smib_spec(Pmax=2.0, Pm=0.8, Pmax_fault=0.0, Pmax_post=1.5)
    assert spec.ref == 1
    assert spec.fault_lines() == [0]
    (Y_fault, Y_post) = spec.fault_admittances([0])
    assert Y_fault[0,1] == 0.0
    assert Y_post[0,1] == 1.5j
