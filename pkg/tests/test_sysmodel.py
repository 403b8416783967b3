import csv
import json

import numpy as np
import pytest

from recprep.errors import ConfigError
from recprep.sysmodel import (
    DEFAULT_CATALOG,
    CostParams,
    DeviceProfile,
    compare_deployments,
    cost_efficiency,
    energy_efficiency,
    gpu_utilization,
    load_catalog,
    opex,
    plan_deployment,
    required_nodes,
    required_units,
    save_catalog,
)


def profile(p=1.0, power=10.0, capex=100.0, upn=1, name="dev", unit="core"):
    return DeviceProfile(
        name=name, unit=unit, preproc_throughput=p, power_watts=power,
        capex_usd=capex, units_per_node=upn,
    )


class TestDeviceProfile:
    def test_field_validation(self):
        with pytest.raises(ConfigError, match="unit"):
            profile(unit="blade")
        with pytest.raises(ConfigError, match="throughput"):
            profile(p=0)
        with pytest.raises(ConfigError, match="power"):
            profile(power=-1)
        with pytest.raises(ConfigError, match="capex"):
            profile(capex=-0.01)
        with pytest.raises(ConfigError, match="units_per_node"):
            profile(upn=0)
        with pytest.raises(ConfigError, match="name"):
            profile(name="")

    def test_zero_capex_allowed(self):
        assert profile(capex=0.0).capex_usd == 0.0


class TestCostParams:
    def test_defaults(self):
        params = CostParams()
        assert params.duration_hours == 26280.0  # 3 years
        assert params.electricity_usd_per_kwh == 0.0733

    def test_validation(self):
        with pytest.raises(ConfigError):
            CostParams(duration_hours=0)
        with pytest.raises(ConfigError):
            CostParams(electricity_usd_per_kwh=-0.1)


class TestRequiredUnits:
    def test_exact_ratio_367(self):
        dev = profile(p=3.7)
        assert required_units(367 * 3.7, dev) == 367

    def test_exact_ratio_9(self):
        dev = profile(p=1250.0)
        assert required_units(9 * 1250.0, dev) == 9

    def test_exact_division_is_one(self):
        assert required_units(5.0, profile(p=5.0)) == 1

    def test_rejects_nonpositive_rate(self):
        with pytest.raises(ValueError):
            required_units(0, profile())

    def test_minimality_random(self):
        rng = np.random.Generator(np.random.PCG64(77))
        for _ in range(2000):
            t = float(rng.uniform(1e-3, 1e7))
            p = float(rng.uniform(1e-3, 1e5))
            n = required_units(t, profile(p=p))
            assert n * p >= t
            assert n == 1 or (n - 1) * p < t


class TestRequiredNodes:
    def test_367_cores_at_32_per_node_is_12_nodes(self):
        assert required_nodes(367, profile(upn=32)) == 12

    def test_exact_fill(self):
        assert required_nodes(64, profile(upn=32)) == 2

    def test_single_unit_nodes(self):
        assert required_nodes(9, profile(upn=1)) == 9


class TestGpuUtilization:
    def test_one_fifth(self):
        assert gpu_utilization(5, profile(p=2.0), 50.0) == pytest.approx(0.2)

    def test_capped_at_one(self):
        assert gpu_utilization(100, profile(p=10.0), 5.0) == 1.0

    def test_zero_units(self):
        assert gpu_utilization(0, profile(), 10.0) == 0.0

    def test_nondecreasing_and_clamped(self):
        dev = profile(p=3.3)
        values = [gpu_utilization(n, dev, 47.0) for n in range(40)]
        assert all(0.0 <= v <= 1.0 for v in values)
        assert all(b >= a for a, b in zip(values, values[1:]))

    def test_rejects_negative_units(self):
        with pytest.raises(ValueError):
            gpu_utilization(-1, profile(), 10.0)


class TestOpex:
    def test_100w_three_years(self):
        assert opex(100.0, CostParams()) == pytest.approx(192.63, abs=0.01)

    def test_zero_power(self):
        assert opex(0.0, CostParams()) == 0.0

    def test_nine_to_one_linearity(self):
        params = CostParams()
        assert opex(225.0, params) / opex(25.0, params) == pytest.approx(9.0, rel=1e-12)

    def test_linear_in_power_and_duration(self):
        rng = np.random.Generator(np.random.PCG64(5))
        for _ in range(200):
            w = float(rng.uniform(1, 1000))
            h = float(rng.uniform(1, 1e5))
            k = float(rng.uniform(0.5, 10))
            params = CostParams(duration_hours=h)
            scaled_power = opex(k * w, params)
            scaled_time = opex(w, CostParams(duration_hours=k * h))
            assert scaled_power == pytest.approx(k * opex(w, params), rel=1e-12)
            assert scaled_time == pytest.approx(k * opex(w, params), rel=1e-12)

    def test_rejects_negative_power(self):
        with pytest.raises(ValueError):
            opex(-1.0, CostParams())


class TestCostEfficiency:
    def test_halved_denominator_doubles(self):
        params = CostParams()
        a = cost_efficiency(10.0, params, 500.0, 500.0)
        b = cost_efficiency(10.0, params, 250.0, 250.0)
        assert b / a == pytest.approx(2.0, rel=1e-12)

    def test_inverse_cost_ratio(self):
        params = CostParams()
        rng = np.random.Generator(np.random.PCG64(6))
        for _ in range(300):
            t = float(rng.uniform(1, 1e4))
            c1, o1 = float(rng.uniform(1, 1e6)), float(rng.uniform(1, 1e6))
            c2, o2 = float(rng.uniform(1, 1e6)), float(rng.uniform(1, 1e6))
            ratio = cost_efficiency(t, params, c2, o2) / cost_efficiency(t, params, c1, o1)
            assert ratio == pytest.approx((c1 + o1) / (c2 + o2), rel=1e-9)

    def test_zero_capex_finite(self):
        v = cost_efficiency(10.0, CostParams(), 0.0, 100.0)
        assert np.isfinite(v) and v > 0

    def test_zero_denominator_rejected(self):
        with pytest.raises(ValueError):
            cost_efficiency(10.0, CostParams(), 0.0, 0.0)


class TestEnergyEfficiency:
    def test_reciprocal_power_ratio(self):
        r = energy_efficiency(100.0, 25.0) / energy_efficiency(100.0, 225.0)
        assert r == pytest.approx(9.0, rel=1e-12)

    def test_nine_units_at_25w(self):
        dev = profile(p=100.0, power=25.0)
        units = required_units(9 * 100.0, dev)
        assert units * dev.power_watts == 225.0

    def test_scale_invariance(self):
        assert energy_efficiency(10.0, 5.0) == energy_efficiency(20.0, 10.0)

    def test_rejects_zero_power(self):
        with pytest.raises(ValueError):
            energy_efficiency(10.0, 0.0)


class TestCompareDeployments:
    CPU = DeviceProfile(
        name="cpu", unit="core", preproc_throughput=10.0, power_watts=7.5,
        capex_usd=150.0, units_per_node=32,
    )
    ISP = DeviceProfile(
        name="isp", unit="isp-device", preproc_throughput=407.8, power_watts=25.0,
        capex_usd=600.0, units_per_node=1,
    )

    def test_cpu_vs_isp_power_ordering(self):
        t = 367 * 10.0  # 367 cores; ceil(3670/407.8) = 9 devices
        report = compare_deployments(t, [self.CPU, self.ISP])
        cpu, isp = report.rows
        assert cpu.units_required == 367
        assert cpu.nodes == 12
        assert isp.units_required == 9
        assert isp.total_power_watts == pytest.approx(225.0)
        assert isp.total_power_watts < cpu.total_power_watts

    def test_capex_charged_per_whole_node(self):
        t = 367 * 10.0
        units, nodes, power, capex, _ = plan_deployment(t, self.CPU, CostParams())
        assert (units, nodes) == (367, 12)
        assert capex == pytest.approx(12 * 32 * 150.0)
        assert power == pytest.approx(367 * 7.5)

    def test_self_comparison_ratios_are_one(self):
        report = compare_deployments(100.0, [self.CPU, self.CPU])
        for row in report.rows:
            assert row.cost_efficiency_ratio == 1.0
            assert row.energy_efficiency_ratio == 1.0

    def test_rerun_identical(self):
        a = compare_deployments(123.0, [self.CPU, self.ISP])
        b = compare_deployments(123.0, [self.CPU, self.ISP])
        assert a == b

    def test_needs_two_profiles(self):
        with pytest.raises(ValueError, match="at least 2"):
            compare_deployments(100.0, [self.CPU])

    def test_ratio_columns_match_formula_inverses(self):
        report = compare_deployments(500.0, [self.CPU, self.ISP])
        base, other = report.rows
        cost_base = base.capex_usd + base.opex_usd
        cost_other = other.capex_usd + other.opex_usd
        assert other.cost_efficiency_ratio == pytest.approx(cost_base / cost_other, rel=1e-12)
        assert other.energy_efficiency_ratio == pytest.approx(
            base.total_power_watts / other.total_power_watts, rel=1e-12
        )

    def test_csv_and_json_reports(self, tmp_path):
        report = compare_deployments(367 * 10.0, [self.CPU, self.ISP])
        csv_path = tmp_path / "plan.csv"
        json_path = tmp_path / "plan.json"
        report.write_csv(csv_path)
        report.write_json(json_path)

        with open(csv_path) as fh:
            rows = list(csv.DictReader(fh))
        assert [r["name"] for r in rows] == ["cpu", "isp"]
        assert rows[0]["units_required"] == "367"
        assert rows[0]["nodes"] == "12"
        # dollars as cents-rounded strings
        assert rows[0]["capex_usd"] == "57600.00"

        doc = json.loads(json_path.read_text())
        assert doc["baseline"] == "cpu"
        assert doc["deployments"][1]["units_required"] == 9
        assert doc["deployments"][0]["capex_usd"] == 57600.0


class TestCatalog:
    def test_default_catalog_is_valid_and_covers_device_classes(self):
        assert len(DEFAULT_CATALOG) >= 2
        powers = {p.power_watts for p in DEFAULT_CATALOG}
        assert {25.0, 250.0, 225.0} <= powers
        units = {p.unit for p in DEFAULT_CATALOG}
        assert "core" in units and "isp-device" in units

    def test_roundtrip(self, tmp_path):
        path = tmp_path / "catalog.json"
        save_catalog(list(DEFAULT_CATALOG), path)
        loaded = load_catalog(path)
        assert loaded == list(DEFAULT_CATALOG)

    def test_missing_key_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"devices": [{"name": "x", "unit": "core"}]}))
        with pytest.raises(ConfigError, match="missing keys"):
            load_catalog(path)

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        entry = {
            "name": "x", "unit": "core", "preproc_throughput": 1.0,
            "power_watts": 1.0, "capex_usd": 1.0, "warranty_years": 3,
        }
        path.write_text(json.dumps({"devices": [entry]}))
        with pytest.raises(ConfigError, match="unknown keys"):
            load_catalog(path)

    def test_garbage_json_rejected(self, tmp_path):
        path = tmp_path / "nope.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError, match="cannot read"):
            load_catalog(path)

    def test_empty_catalog_rejected(self, tmp_path):
        path = tmp_path / "empty.json"
        path.write_text(json.dumps({"devices": []}))
        with pytest.raises(ConfigError, match="no devices"):
            load_catalog(path)

    def test_units_per_node_defaults_to_one(self, tmp_path):
        path = tmp_path / "cat.json"
        entry = {
            "name": "x", "unit": "accelerator", "preproc_throughput": 2.0,
            "power_watts": 30.0, "capex_usd": 10.0,
        }
        path.write_text(json.dumps({"devices": [entry]}))
        assert load_catalog(path)[0].units_per_node == 1
