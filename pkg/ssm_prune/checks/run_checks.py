import importlib.util
import os
import re
import sys

import numpy as np
from colorama import Fore


def get_numbered_checks():
    current_dir = os.path.dirname(os.path.abspath(__file__))
    files = os.listdir(current_dir)

    # Filter for .py files that start with a number
    numbered_checks = []
    pattern = re.compile(r'^(\d+)_.*\.py$')

    for file in files:
        match = pattern.match(file)
        if match:
            num = int(match.group(1))
            numbered_checks.append((num, file))

    # Sort by the leading number
    numbered_checks.sort(key=lambda x: x[0])

    return [check[1] for check in numbered_checks]


def load_check(check):
    current_dir = os.path.dirname(os.path.abspath(__file__))
    name = f"ssm_prune.checks.suite_{os.path.splitext(check)[0]}"
    spec = importlib.util.spec_from_file_location(name, os.path.join(current_dir, check))
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


def run_checks(checks, threads=1, seed=0):
    """Run every suite in order; returns the list of CheckResult."""
    results = []
    for check in checks:
        print(f"\n🚀 Running {check}...")
        number = int(check.split("_", 1)[0])
        module = load_check(check)
        result = module.run(np.random.default_rng([seed, number]), threads)
        results.append(result)
        if result.passed:
            print(Fore.GREEN + f"✅ {result.name}: {result.instances} instances passed. {result.detail}")
        else:
            print(Fore.RED + f"❌ {result.name} failed: {result.detail}")
    return results


if __name__ == "__main__":
    checks = get_numbered_checks()

    if not checks:
        print("⚠️ No numbered checks found.")
        sys.exit(0)

    print(f"Found {len(checks)} numbered checks: {checks}")
    results = run_checks(checks)
    sys.exit(0 if all(r.passed for r in results) else 1)
