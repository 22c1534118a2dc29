"""The bug-injection loop: plan, apply, check, accept or revert.

Generates a small design with its regression kit (golden snapshot and check
scripts), then walks seeded scenarios of each bug type through the loop.
Accepted scenarios are cached; rejections revert the tree byte-exactly.
Every path leaves the sources identical to the golden snapshot at the end.
"""

import sys
import tempfile
from pathlib import Path

from wavetriage import mutate
from wavetriage.fixtures import gen_design
from wavetriage.rtl import scan_sources

root = Path(tempfile.mkdtemp(prefix="inject_demo_"))
design = gen_design(root / "design", n_modules=3, seed=42)
table = scan_sources(design.sources())
print(f"design at {design.root} with targets {design.modules}")

check = mutate.CheckCommands(
    compile=f"{sys.executable} {design.root}/check_compile.py {{design_dir}}",
    test=f"{sys.executable} {design.root}/check_test.py {{design_dir}}",
)
cache = root / "cache.jsonl"

for i, bug_type in enumerate(mutate.BUG_TYPES):
    module = design.modules[i % len(design.modules)]
    specs = mutate.plan_scenario(
        design.root, f"{module}.sv", table, module, [bug_type], seed=7 + i
    )
    spec = specs[0]
    scenario = mutate.run_scenario(
        f"demo-{i}", specs, check, design_dir=design.root, cache_path=cache
    )
    preview = spec.replacement if spec.replacement else "<deleted>"
    print(f"\n{bug_type} in {module}: {scenario.status}")
    print(f"  - {spec.original.splitlines()[0][:60]}")
    print(f"  + {preview.splitlines()[0][:60]}")
    if scenario.status == mutate.STATUS_ACCEPTED:
        mutate.revert_all(scenario.patches, design.root)

clean = all(
    p.read_text() == (design.root / "golden" / p.name).read_text()
    for p in design.root.glob("*.sv")
)
print(f"\nsources byte-identical to golden snapshot: {clean}")
entries = mutate.load_cache(cache) if cache.exists() else []
print(f"cached accepted scenarios: {len(entries)}")
if entries:
    records = mutate.replay_cached(entries[0], design.root)
    print("replayed first cached scenario: diff reapplied identically")
    mutate.revert_all(records, design.root)
