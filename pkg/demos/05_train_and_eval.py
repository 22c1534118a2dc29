"""Train the classifier suite on a synthetic corpus and compare models.

Builds a small failing-waveform corpus (each module leaves a statistical
signature in its own signals), runs the extraction pipeline, then fits
KNN, random forest, and gradient-boosted trees and reports the macro
metrics. The distance-based model trails the tree ensembles once the
irrelevant-signal count grows, which is the expected regime.
"""

import tempfile
from pathlib import Path

from wavetriage.fixtures import (
    build_scenarios,
    gen_design,
    materialize_corpus,
    simulator_command,
)
from wavetriage.metrics import evaluate
from wavetriage.models import fit
from wavetriage.orchestrate import (
    PipelineConfig,
    dispatch,
    run_data_pipeline,
    scenario_jobs,
)
from wavetriage.trees import GBTParams, RFParams

root = Path(tempfile.mkdtemp(prefix="train_demo_"))
design = gen_design(root / "design", n_modules=5, seed=1)
scenarios = build_scenarios(design, train_per_module=15, test_per_module=5, seed=1)
materialize_corpus(design, scenarios, ticks=260)
print(f"corpus: {len(scenarios)} scenarios over {len(design.modules)} modules")

cfg = PipelineConfig(
    design_dir=str(design.root),
    targets=list(design.modules),
    top_module=design.top_module,
    dut_root=design.dut_root,
    simulator=simulator_command(),
    tick_cap=400,
    worker_count=2,
    seed=1,
    out_dir=str(root / "out"),
)
train_results = dispatch(scenario_jobs(cfg, root / "s/train", "train", 15), cfg)
test_results = dispatch(scenario_jobs(cfg, root / "s/test", "test", 5), cfg)
train, report = run_data_pipeline(train_results, cfg)
test, _ = run_data_pipeline(test_results, cfg)
print(f"train: {train.matrix.shape}, raw->final bytes {report.raw} -> {report.final}")

print(f"\n{'model':<16} {'top1':>6} {'top3':>6} {'macroF1':>8} {'AUC':>6}")
for kind, params in (
    ("knn", None),
    ("random_forest", RFParams(n_trees=60)),
    ("gbt", GBTParams(n_rounds=40)),
):
    model = fit(kind, train, params, seed=1)
    m = evaluate(model, test)
    print(f"{kind:<16} {m.top1:>6.3f} {m.top3:>6.3f} {m.macro_f1:>8.3f} {m.auc_roc_macro:>6.3f}")

svg_path = root / "confusion.svg"
svg_path.write_text(evaluate(model, test).confusion_svg())
print(f"\nconfusion heatmap for gbt written to {svg_path}")
