"""
Permission is hereby granted, free of charge, to any person obtaining a copy
of this software and associated documentation files (the "Software"), to deal
in the Software without restriction, including without limitation the rights
to use, copy, modify, merge, publish, distribute, sublicense, and/or sell
copies of the Software, and to permit persons to whom the Software is
furnished to do so, subject to the following conditions:

The above copyright notice and this permission notice shall be included in all
copies or substantial portions of the Software.

THE SOFTWARE IS PROVIDED "AS IS", WITHOUT WARRANTY OF ANY KIND, EXPRESS OR
IMPLIED, INCLUDING BUT NOT LIMITED TO THE WARRANTIES OF MERCHANTABILITY,
FITNESS FOR A PARTICULAR PURPOSE AND NONINFRINGEMENT. IN NO EVENT SHALL THE
AUTHORS OR COPYRIGHT HOLDERS BE LIABLE FOR ANY CLAIM, DAMAGES OR OTHER
LIABILITY, WHETHER IN AN ACTION OF CONTRACT, TORT OR OTHERWISE, ARISING FROM,
OUT OF OR IN CONNECTION WITH THE SOFTWARE OR THE USE OR OTHER DEALINGS IN THE
SOFTWARE.
"""

import json
import logging
import os

import numpy as np
from scipy import linalg

from .errors import ConfigError


logger = logging.getLogger(__name__)

SYSTEMS_DIR = os.path.join(os.path.dirname(os.path.realpath(__file__)),
    "systems")


class Network(object):
    """Bus-level network used to derive machine-node admittances.

    Machines are attached to their terminal buses through their transient
    reactance; loads are constant impedances. All quantities are per unit.

    Constructor args:
        n_bus: Number of buses (numbered 0..n_bus-1).
        machine_bus: Terminal bus of each machine.
        xd: Transient reactance of each machine.
        loads: List of (bus, P, Q, V) tuples; V is the voltage magnitude at
            which the load is converted to an impedance.
        lines: List of dicts with keys "from", "to", "r", "x" and optionally
            "b" (total line charging) and "switchable" (default True).
    """

    def __init__(self, n_bus, machine_bus, xd, loads, lines):
        self.n_bus = int(n_bus)
        self.machine_bus = [int(b) for b in machine_bus]
        self.xd = np.asarray(xd, dtype=float)
        self.loads = [(int(b), float(p), float(q), float(v))
            for (b,p,q,v) in loads]
        self.lines = [dict(line) for line in lines]
        for (i,line) in enumerate(self.lines):
            for end in ("from", "to"):
                if not 0 <= line[end] < self.n_bus:
                    raise ConfigError("line %d: bus %r out of range" % (
                        i, line[end]))
        if len(self.machine_bus) != len(self.xd):
            raise ConfigError("machine_bus and xd lengths differ")

    def switchable_lines(self):
        """Indices of the lines that may be faulted."""
        return [i for (i,line) in enumerate(self.lines)
            if line.get("switchable", True)]

    def bus_admittance(self, removed_lines=()):
        """Bus admittance matrix with loads included as shunts.

        Args:
            removed_lines: Indices of lines taken out of service.

        Returns:
            The complex (n_bus, n_bus) admittance matrix.
        """
        Y = np.zeros((self.n_bus, self.n_bus), dtype=complex)
        removed = set(removed_lines)
        for (i,line) in enumerate(self.lines):
            if i in removed:
                continue
            (f, t) = (line["from"], line["to"])
            y = 1.0 / complex(line.get("r", 0.0), line["x"])
            b_half = 0.5j * line.get("b", 0.0)
            Y[f,f] += y + b_half
            Y[t,t] += y + b_half
            Y[f,t] -= y
            Y[t,f] -= y
        for (bus, p, q, v) in self.loads:
            Y[bus,bus] += complex(p, -q) / v**2
        return Y

    def reduce(self, removed_lines=(), grounded_buses=()):
        """Kron-reduce the network to the machine internal nodes.

        Args:
            removed_lines: Indices of lines out of service.
            grounded_buses: Buses held at zero voltage (bolted faults);
                these are eliminated before the reduction.

        Returns:
            The complex (n_g, n_g) reduced admittance matrix.
        """
        n_g = len(self.machine_bus)
        Y_bus = self.bus_admittance(removed_lines)
        n = self.n_bus + n_g
        Y = np.zeros((n, n), dtype=complex)
        Y[n_g:,n_g:] = Y_bus
        for (k, (bus, xd)) in enumerate(zip(self.machine_bus, self.xd)):
            y = 1.0 / complex(0.0, xd)
            Y[k,k] += y
            Y[n_g+bus,n_g+bus] += y
            Y[k,n_g+bus] -= y
            Y[n_g+bus,k] -= y

        grounded = set(n_g+b for b in grounded_buses)
        keep = [i for i in range(n_g, n) if i not in grounded]
        Y11 = Y[:n_g,:n_g]
        Y12 = Y[:n_g,keep]
        Y21 = Y[keep,:n_g]
        Y22 = Y[np.ix_(keep,keep)]
        Y_red = Y11 - Y12.dot(linalg.solve(Y22, Y21))
        # remove round-off asymmetry
        return 0.5 * (Y_red + Y_red.T)

    def fault_admittances(self, lines):
        """Admittances during and after a fault on a set of lines.

        The from-bus of every faulted line is grounded while the fault is
        on; the faulted lines are removed after clearing.

        Returns:
            Tuple (Y_fault, Y_post).
        """
        lines = sorted(set(int(l) for l in lines))
        buses = sorted(set(self.lines[l]["from"] for l in lines))
        return (self.reduce(grounded_buses=buses),
            self.reduce(removed_lines=lines))


class PowerSystemSpec(object):
    """Classical multi-machine system reduced to the machine nodes.

    Constructor args:
        H: Inertia constants [s].
        D: Damping coefficients [p.u.].
        Pm: Nominal mechanical powers [p.u.].
        E: Internal voltage magnitudes [p.u.].
        Y_pre: Pre-fault reduced admittance (complex n_g x n_g).
        omega_s: Synchronous speed [rad/s].
        Y_fault_by_line, Y_post_by_line: Dicts line id -> admittance for
            single-line faults (optional when network is given).
        network: Optional Network from which fault admittances for any set
            of lines are derived.
        ref: Index of the reference (slack) machine.
        name: Free-form system name.
    """

    def __init__(self, H, D, Pm, E, Y_pre, omega_s=2*np.pi*60,
        Y_fault_by_line=None, Y_post_by_line=None, network=None, ref=0,
        name=""):

        self.H = np.asarray(H, dtype=float)
        self.D = np.asarray(D, dtype=float)
        self.Pm = np.asarray(Pm, dtype=float)
        self.E = np.asarray(E, dtype=float)
        self.Y_pre = np.asarray(Y_pre, dtype=complex)
        self.omega_s = float(omega_s)
        self.Y_fault_by_line = dict(Y_fault_by_line or {})
        self.Y_post_by_line = dict(Y_post_by_line or {})
        self.network = network
        self.ref = int(ref)
        self.name = name
        self.validate()

    @property
    def n_g(self):
        return len(self.H)

    @property
    def n_x(self):
        return 2*self.n_g

    def validate(self):
        n = self.n_g
        for (key, arr) in (("D", self.D), ("Pm", self.Pm), ("E", self.E)):
            if arr.shape != (n,):
                raise ConfigError("%s has shape %s, expected (%d,)" % (
                    key, arr.shape, n))
        if not (self.H > 0).all():
            raise ConfigError("inertia constants must be positive")
        if not (self.D >= 0).all():
            raise ConfigError("damping must be nonnegative")
        if not 0 <= self.ref < n:
            raise ConfigError("reference machine %d out of range" % self.ref)
        mats = [("Y_pre", self.Y_pre)]
        mats += [("Y_fault_by_line[%s]" % k, v)
            for (k,v) in self.Y_fault_by_line.items()]
        mats += [("Y_post_by_line[%s]" % k, v)
            for (k,v) in self.Y_post_by_line.items()]
        for (key, Y) in mats:
            Y = np.asarray(Y)
            if Y.shape != (n,n):
                raise ConfigError("%s has shape %s, expected (%d,%d)" % (
                    key, Y.shape, n, n))
            if not np.allclose(Y, Y.T, rtol=0, atol=1e-9):
                raise ConfigError("%s is not symmetric" % key)

    def fault_lines(self):
        """Ids of the lines on which faults may be applied."""
        if self.network is not None:
            return self.network.switchable_lines()
        return sorted(self.Y_fault_by_line)

    def fault_admittances(self, lines):
        """Reduced admittances (Y_fault, Y_post) for a set of faulted lines.

        Raises:
            ConfigError: If the spec only tabulates single-line faults and
                several lines (or an unknown line) are requested.
        """
        lines = tuple(sorted(set(int(l) for l in lines)))
        if self.network is not None:
            return self.network.fault_admittances(lines)
        if len(lines) != 1 or lines[0] not in self.Y_fault_by_line:
            raise ConfigError("no tabulated fault admittance for lines %s"
                % (lines,))
        return (np.asarray(self.Y_fault_by_line[lines[0]], dtype=complex),
            np.asarray(self.Y_post_by_line[lines[0]], dtype=complex))


def _complex_matrix(pairs):
    arr = np.asarray(pairs, dtype=float)
    if arr.ndim != 3 or arr.shape[-1] != 2:
        raise ConfigError("admittance must be a matrix of [re, im] pairs")
    return arr[...,0] + 1j*arr[...,1]


def _pairs(Y):
    Y = np.asarray(Y, dtype=complex)
    return np.stack((Y.real, Y.imag), axis=-1).tolist()


def spec_from_dict(doc):
    """Build a PowerSystemSpec from a parsed JSON document.

    Two forms are accepted: the reduced form (keys n_g, H, D, Pm, E,
    Y_pre, Y_fault_by_line, Y_post_by_line, omega_s) and the network form
    (keys buses, machines, loads, lines), which is Kron-reduced here.
    """
    try:
        if "lines" in doc:
            return _spec_from_network_doc(doc)
        n_g = int(doc["n_g"])
        spec = PowerSystemSpec(
            H=doc["H"], D=doc["D"], Pm=doc["Pm"], E=doc["E"],
            Y_pre=_complex_matrix(doc["Y_pre"]),
            omega_s=doc.get("omega_s", 2*np.pi*60),
            Y_fault_by_line=dict((int(k), _complex_matrix(v))
                for (k,v) in doc.get("Y_fault_by_line", {}).items()),
            Y_post_by_line=dict((int(k), _complex_matrix(v))
                for (k,v) in doc.get("Y_post_by_line", {}).items()),
            ref=doc.get("ref", 0), name=doc.get("name", ""))
    except KeyError as e:
        raise ConfigError("system description is missing key %s" % e)
    if spec.n_g != n_g:
        raise ConfigError("n_g=%d but %d inertia constants given" % (
            n_g, spec.n_g))
    return spec


def _spec_from_network_doc(doc):
    machines = doc["machines"]
    network = Network(
        n_bus=doc["buses"],
        machine_bus=[m["bus"] for m in machines],
        xd=[m["xd"] for m in machines],
        loads=[(l["bus"], l["P"], l["Q"], l.get("V", 1.0))
            for l in doc.get("loads", [])],
        lines=doc["lines"])
    return PowerSystemSpec(
        H=[m["H"] for m in machines],
        D=[m.get("D", 0.0) for m in machines],
        Pm=[m["Pm"] for m in machines],
        E=[m["E"] for m in machines],
        Y_pre=network.reduce(),
        omega_s=doc.get("omega_s", 2*np.pi*60),
        network=network, ref=doc.get("ref", 0), name=doc.get("name", ""))


def spec_to_dict(spec):
    """The reduced-form JSON document of a PowerSystemSpec.

    Single-line fault admittances are tabulated for every fault line.
    """
    fault = {}
    post = {}
    for line in spec.fault_lines():
        (Y_f, Y_p) = spec.fault_admittances([line])
        fault[str(line)] = _pairs(Y_f)
        post[str(line)] = _pairs(Y_p)
    return {"name": spec.name, "n_g": spec.n_g, "H": spec.H.tolist(),
        "D": spec.D.tolist(), "Pm": spec.Pm.tolist(), "E": spec.E.tolist(),
        "Y_pre": _pairs(spec.Y_pre), "Y_fault_by_line": fault,
        "Y_post_by_line": post, "omega_s": spec.omega_s, "ref": spec.ref}


def load_system_spec(path):
    """Load a system description from a JSON file.

    Args:
        path: File path, or the name of a bundled system
            ("three_machine" or "nine_machine").
    """
    if not os.path.exists(path):
        bundled = os.path.join(SYSTEMS_DIR, path+".json")
        if not os.path.exists(bundled):
            raise ConfigError("system description %r not found" % path)
        path = bundled
    with open(path) as f:
        try:
            doc = json.load(f)
        except ValueError as e:
            raise ConfigError("%s: invalid JSON (%s)" % (path, e))
    spec = spec_from_dict(doc)
    logger.debug("loaded system %r with %d machines from %s", spec.name,
        spec.n_g, path)
    return spec


def save_system_spec(spec, path):
    """Write the reduced-form JSON description of a system."""
    with open(path, 'w') as f:
        json.dump(spec_to_dict(spec), f, indent=1)


def smib_spec(Pmax, Pm, H=5.0, D=0.0, H_bus=1e6, omega_s=2*np.pi*60,
    Pmax_fault=None, Pmax_post=None):
    """Single machine against a (very stiff) second machine.

    Machine 0 is the generator, machine 1 stands in for the infinite bus
    and is the reference. The network is lossless with E = 1, so
    P_e,0 = Pmax*sin(delta_0 - delta_1).

    Args:
        Pmax: Pre-fault transfer capacity [p.u.].
        Pm: Generator mechanical power [p.u.].
        H, D: Generator inertia and damping.
        H_bus: Inertia of the stiff machine.
        Pmax_fault, Pmax_post: Transfer capacity during and after a fault on
            line 0 (if None, no fault line is tabulated).
    """
    def Y(pmax):
        return np.array([[0.0, 1j*pmax], [1j*pmax, 0.0]])

    fault = {}
    post = {}
    if Pmax_fault is not None:
        fault[0] = Y(Pmax_fault)
        post[0] = Y(Pmax if Pmax_post is None else Pmax_post)
    return PowerSystemSpec(H=[H, H_bus], D=[D, 0.0], Pm=[Pm, -Pm],
        E=[1.0, 1.0], Y_pre=Y(Pmax), omega_s=omega_s,
        Y_fault_by_line=fault, Y_post_by_line=post, ref=1, name="smib")
