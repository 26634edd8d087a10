import csv
import io
import json
import os
import tempfile
import unittest

from whittaker_lab.cli import build_parser, run

PAIR = ["--z", "0.3+0.4i", "--z-prime", "0.3-0.4i"]


def _rows(text):
    lines = [line for line in text.splitlines() if not line.startswith("#")]
    return list(csv.DictReader(lines))


class Test_CLI(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def _run(self, *argv):
        out = io.StringIO()
        code = run(list(argv), stdout=out)
        return code, out.getvalue()

    def _kernel_file(self, record):
        path = os.path.join(self.tmp.name, "kernel.json")
        with open(path, "w", encoding="utf-8") as file:
            json.dump(record, file)
        return path

    def test_eval_block(self):
        code, text = self._run("eval", *PAIR, "--block", "pp", "--x", "1.0", "2.0", "--y", "0.5", "--no-timestamp")
        self.assertEqual(code, 0)
        rows = _rows(text)
        self.assertEqual(len(rows), 2)
        self.assertEqual(list(rows[0]), ["x", "y", "value"])
        self.assertTrue(text.startswith("# config: "))

    def test_eval_aux_json(self):
        code, text = self._run("eval", *PAIR, "--block", "phi", "--x", "1.0", "--format", "json", "--no-timestamp")
        self.assertEqual(code, 0)
        document = json.loads(text)
        self.assertEqual(document["config"]["format"], "json")
        self.assertEqual(len(document["records"]), 1)
        self.assertNotIn("generated", document)

    def test_deterministic_without_timestamp(self):
        argv = ("finite", "--random", "2", "2", "--seed", "5", "--enumerate", "--no-timestamp")
        first, second = self._run(*argv), self._run(*argv)
        self.assertEqual(first, second)
        self.assertEqual(first[0], 0)

    def test_finite_d_example(self):
        path = self._kernel_file({"n1": 1, "n2": 1, "entries": [[0.0, 1.5], [-1.5, 0.0]]})
        code, text = self._run("finite", "--input", path, "--enumerate", "--no-timestamp")
        self.assertEqual(code, 0)
        probabilities = {row["configuration"]: float(row["probability"]) for row in _rows(text)}
        self.assertAlmostEqual(probabilities["{0,1}"], 2.25 / 3.25, places=14)
        self.assertAlmostEqual(sum(probabilities.values()), 1.0, places=14)

    def test_finite_writes_file(self):
        path = self._kernel_file({"n1": 1, "n2": 1, "entries": [[0.0, 1.5], [-1.5, 0.0]]})
        target = os.path.join(self.tmp.name, "out", "weights.csv")
        code, text = self._run("finite", "--input", path, "--enumerate", "--correlation", "0", "-o", target)
        self.assertEqual(code, 0)
        self.assertEqual(text, "")
        self.assertTrue(os.path.exists(os.path.join(self.tmp.name, "out", "weights_weights.csv")))
        self.assertTrue(os.path.exists(os.path.join(self.tmp.name, "out", "weights_correlation.csv")))

    def test_tail_tables(self):
        code, text = self._run("tail", *PAIR, "--u", "0", "1", "--delta", "0.5", "--no-timestamp")
        self.assertEqual(code, 0)
        self.assertIn("# table: constants", text)
        self.assertIn("# table: symbol", text)
        self.assertIn("# table: profile", text)

    def test_validation_error_exit_code(self):
        code, _ = self._run("eval", "--z", "1.0", "--z-prime", "0.5", "--x", "1.0")
        self.assertEqual(code, 2)
        code, _ = self._run("limit", "--z0", "0.3", "--z0-prime", "0.3")
        self.assertEqual(code, 2)

    def test_usage_error_exit_code(self):
        self.assertEqual(self._run("eval", "--x", "1.0")[0], 64)
        self.assertEqual(self._run("transmogrify")[0], 64)
        self.assertEqual(self._run("finite", "--random", "1", "1")[0], 64)

    def test_config_error_exit_code(self):
        path = os.path.join(self.tmp.name, "bad.cfg")
        with open(path, "w", encoding="utf-8") as file:
            file.write("nodes: 80\nnot a key\n")
        self.assertEqual(self._run("eval", *PAIR, "--x", "1.0", "--config", path)[0], 64)

    def test_help_exits_cleanly(self):
        self.assertEqual(self._run("--help")[0], 0)

    def test_parser_aliases(self):
        args = build_parser().parse_args(["limit", "--z0", "0.55", "--z0-prime", "0.35", "--N-list", "8", "16"])
        self.assertEqual(args.N, [8, 16])
        args = build_parser().parse_args(["spectrum", "--a", "0", "--mu", "0.1i", "--m-list", "0.3"])
        self.assertEqual(args.m, [0.3])
        self.assertEqual(args.mu, 0.1j)


if __name__ == "__main__":
    unittest.main()
