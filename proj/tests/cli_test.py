#!/usr/bin/env python3
# Copyright 2026 The Keylock Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""End-to-end checks of the keylock command line and its JSON outputs.

Usage: cli_test.py <keylock binary> <docs dir>
"""

import json
import math
import os
import re
import subprocess
import sys
import tempfile
import unittest
from pathlib import Path

import jsonschema
from referencing import Registry, Resource

BINARY = None
DOCS = None
WORKDIR = None  # relative "out" paths land here


def schema_registry():
    resources = []
    for path in sorted(DOCS.glob("*.schema.json")):
        resources.append((path.name, Resource.from_contents(json.loads(path.read_text()))))
    return Registry().with_resources(resources)


def validate(instance, schema_file):
    schema = json.loads((DOCS / schema_file).read_text())
    validator = jsonschema.Draft202012Validator(schema, registry=schema_registry())
    errors = sorted(validator.iter_errors(instance), key=lambda e: list(e.path))
    if errors:
        raise AssertionError(f"{schema_file}: " + "; ".join(
            f"{list(e.path)}: {e.message}" for e in errors[:5]))


def run(*args, check=True, cwd=None, env=None):
    proc = subprocess.run([str(BINARY), *map(str, args)], capture_output=True, text=True,
                          timeout=600, cwd=cwd or WORKDIR, env=env)
    if check and proc.returncode != 0:
        raise AssertionError(f"{args} exited {proc.returncode}: {proc.stderr}")
    return proc


class CliTest(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls._tmp = tempfile.TemporaryDirectory(prefix="keylock_cli_")
        cls.dir = Path(cls._tmp.name)
        global WORKDIR
        WORKDIR = cls.dir
        run("keygen", "--out", cls.dir / "k.txt", "--seed", 5)
        cls.config = {
            "arch": {"preset": "cnn_micro"},
            "protection": {"placements": ["initial_conv"], "block_size": 2, "key_file": "k.txt"},
            "train": {"epochs": 2, "batch_size": 16},
            "data": {"source": "synthetic", "train_size": 64, "test_size": 40},
            "eval": {"wrong_keys": 3},
            "key_estimation": {"enabled": True, "attacker_size": 20, "eval_size": 10,
                               "trace": "summary"},
            "finetune": {"enabled": True, "sizes": [10, 20], "epochs": 2, "trajectory": True},
            "out": "run",
        }
        (cls.dir / "exp.json").write_text(json.dumps(cls.config))
        run("run", "--config", cls.dir / "exp.json")
        cls.out = cls.dir / "run"

    @classmethod
    def tearDownClass(cls):
        cls._tmp.cleanup()

    def test_schemas_are_well_formed(self):
        for path in DOCS.glob("*.schema.json"):
            jsonschema.Draft202012Validator.check_schema(json.loads(path.read_text()))

    def test_config_matches_schema(self):
        validate(self.config, "config.schema.json")
        bad = dict(self.config, surprise=1)
        with self.assertRaises(AssertionError):
            validate(bad, "config.schema.json")

    def test_keygen_writes_a_hex_seed(self):
        first = (self.dir / "k.txt").read_text().splitlines()[0]
        self.assertRegex(first, r"^[0-9a-f]{32}$")
        run("keygen", "--out", self.dir / "k2.txt", "--seed", 5)
        self.assertEqual((self.dir / "k2.txt").read_text(), (self.dir / "k.txt").read_text())
        run("keygen", "--out", self.dir / "k3.txt", "--label", "fresh")
        self.assertNotEqual((self.dir / "k3.txt").read_text().splitlines()[0], first)

    def test_keygen_json_reports_the_fingerprint(self):
        proc = run("keygen", "--out", self.dir / "k4.txt", "--seed", 5, "--json")
        self.assertRegex(json.loads(proc.stdout)["fingerprint"], r"^[0-9a-f]{8}$")

    def test_every_report_matches_its_schema(self):
        validate(json.loads((self.out / "eval_report.json").read_text()), "eval_report.schema.json")
        validate(json.loads((self.out / "training_log.json").read_text()), "training_log.schema.json")
        validate(json.loads((self.out / "model.json").read_text()), "model.schema.json")
        for name in ("attack_key_estimation.json", "attack_finetune.json"):
            validate(json.loads((self.out / name).read_text()), "attack_report.schema.json")

    def test_summary_trace_is_truncated(self):
        report = json.loads((self.out / "attack_key_estimation.json").read_text())
        result = report["results"][0]
        self.assertEqual(result["trace_mode"], "summary")
        self.assertEqual(len(result["trace"]), 20)
        self.assertEqual(result["trace"][-1]["step"], result["pairs"] - 1)

    def test_finetune_trajectory_has_one_entry_per_epoch(self):
        report = json.loads((self.out / "attack_finetune.json").read_text())
        for result in report["results"]:
            self.assertEqual(len(result["trajectory"]), 2)
            self.assertEqual(result["trajectory"][-1], result["final_accuracy"])

    def test_tables_have_the_expected_columns(self):
        self.assertTrue((self.out / "protection.csv").read_text().startswith(
            "model,key_space,accuracy_correct,accuracy_wrong_mean,accuracy_wrong_std,accuracy_none\n"))
        self.assertEqual((self.out / "finetune.csv").read_text().splitlines()[0],
                         "model,original,d10,d20")

    def test_inspect_prints_key_space_in_factorial_and_decimal(self):
        cfg = {
            "arch": {"preset": "resnet_tiny"},
            "protection": {"placements": ["initial_conv", "layer4"], "key_file": "k.txt"},
            "train": {"epochs": 0},
            "data": {"source": "synthetic", "train_size": 20, "test_size": 10},
            "eval": {"wrong_keys": 1},
            "out": "tiny",
        }
        (self.dir / "tiny.json").write_text(json.dumps(cfg))
        run("train", "--config", self.dir / "tiny.json")
        text = run("inspect", "--model", self.dir / "tiny" / "model.ckpt").stdout
        found = dict(re.findall(r"key space (\d+)! \(decimal: (\d+)\)", text))
        self.assertEqual(set(found), {"64", "512"})
        for n, decimal in found.items():
            self.assertEqual(int(decimal), math.factorial(int(n)))
        self.assertIn("key fingerprint: ", text)
        key_hex = (self.dir / "k.txt").read_text().splitlines()[0]
        self.assertNotIn(key_hex, text)
        self.assertNotIn(key_hex, (self.dir / "tiny" / "model.json").read_text())

    def test_eval_all_conditions(self):
        proc = run("eval", "--model", self.out / "model.ckpt", "--key", self.dir / "k.txt",
                   "--mode", "all", "--json", "--out", self.dir / "eval.json")
        report = json.loads(proc.stdout)
        validate(report, "eval_report.schema.json")
        self.assertEqual(json.loads((self.dir / "eval.json").read_text()), report)
        saved = json.loads((self.out / "eval_report.json").read_text())
        self.assertEqual(report["accuracy"]["correct"], saved["accuracy"]["correct"])

    def test_eval_without_key_fails(self):
        proc = run("eval", "--model", self.out / "model.ckpt", "--mode", "correct", check=False)
        self.assertNotEqual(proc.returncode, 0)
        self.assertIn("--key", proc.stderr)

    def test_eval_with_the_wrong_key_file_fails(self):
        run("keygen", "--out", self.dir / "other.txt", "--seed", 6)
        proc = run("eval", "--model", self.out / "model.ckpt", "--key", self.dir / "other.txt",
                   check=False)
        self.assertNotEqual(proc.returncode, 0)
        self.assertIn("fingerprint", proc.stderr)

    def test_eval_none_needs_no_key(self):
        proc = run("eval", "--model", self.out / "model.ckpt", "--mode", "none", "--json")
        self.assertIn("accuracy", json.loads(proc.stdout))

    def test_unknown_flag_fails(self):
        proc = run("eval", "--model", self.out / "model.ckpt", "--bogus", check=False)
        self.assertNotEqual(proc.returncode, 0)
        self.assertNotEqual(run("frobnicate", check=False).returncode, 0)

    def test_attack_key_without_the_true_key(self):
        proc = run("attack-key", "--model", self.out / "model.ckpt", "--attacker-size", 20,
                   "--eval-size", 10, "--trace", "summary", "--json")
        report = json.loads(proc.stdout)
        validate(report, "attack_report.schema.json")
        self.assertIsNone(report["results"][0]["correct_accuracy"])

    def test_attack_finetune_random_key(self):
        proc = run("attack-finetune", "--model", self.out / "model.ckpt", "--sizes", "10",
                   "--epochs", 1, "--attack-transform", "random-key", "--json")
        report = json.loads(proc.stdout)
        validate(report, "attack_report.schema.json")
        self.assertEqual(report["transform"], "random-key")
        self.assertRegex(report["results"][0]["random_key_fingerprint"], r"^[0-9a-f]{8}$")

    def test_missing_dataset_names_the_expected_location(self):
        cfg = dict(self.config, data={"source": "cifar10", "dir": "nowhere"},
                   key_estimation={"enabled": False}, finetune={"enabled": False}, out="cifar")
        (self.dir / "cifar.json").write_text(json.dumps(cfg))
        env = dict(os.environ)
        env.pop("KEYLOCK_DATA_DIR", None)
        proc = run("run", "--config", self.dir / "cifar.json", check=False, env=env)
        self.assertNotEqual(proc.returncode, 0)
        self.assertIn("nowhere", proc.stderr)
        self.assertTrue((self.dir / "cifar" / "FAILED").exists())


if __name__ == "__main__":
    BINARY = Path(sys.argv[1]).resolve()
    DOCS = Path(sys.argv[2]).resolve()
    unittest.main(argv=[sys.argv[0], "-v"])
