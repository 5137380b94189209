"""Walkthrough: explaining predictions two ways.

The plain classifier gets local surrogate explanations (global means plus a
misprediction table); the knowledge-compiled model yields threshold rules
read directly off its trained weights.
"""

import numpy as np

from hornnet import parse_rules
from hornnet.datakit import SynthConfig, apply_normalization, feature_bounds, generate_synthetic
from hornnet.explain import format_misprediction_table, global_explain, misprediction_report
from hornnet.kbann import CompileConfig, compile_rules, extract_rules, format_extracted_rules
from hornnet.tensornet import TrainConfig, build_mlp, predict_proba, train

rules = parse_rules(
    "Final_score :- CT_concepts, CT_skills.\n"
    "CT_concepts :- Conditional, Loop.\n"
    "CT_skills :- Debug, Simulation, Function.\n"
)

train_raw, test_raw = generate_synthetic(SynthConfig(seed=3))
bounds = feature_bounds(train_raw)
train_data = apply_normalization(train_raw, bounds)
test_data = apply_normalization(test_raw, bounds)

print("training the plain classifier...")
baseline = build_mlp(
    train_data.n_features, [50, 50], 2, seed=3,
    input_names=list(train_data.feature_names), class_names=["Low", "High"],
)
baseline, _ = train(baseline, train_data, TrainConfig(seed=3))


def predict_fn(x):
    return np.atleast_2d(predict_proba(baseline, x))


print("fitting local surrogates on every test row (this samples around each point)...")
global_exp = global_explain(predict_fn, test_data, n_samples=500, seed=3)
print("\nmean |importance| per feature (plain classifier):")
for name, value in sorted(global_exp.mean_abs.items(), key=lambda kv: -kv[1]):
    print(f"  {name:<14} {value:.4f}")

records = misprediction_report(predict_fn, test_data, n_samples=500, seed=3)
print(f"\n{len(records)} mispredicted test rows:")
print(format_misprediction_table(records))

print("training the knowledge-compiled model and extracting its rules...")
net = compile_rules(rules, train_data.feature_names, ("Low", "High"), CompileConfig(seed=3))
model, _ = train(net, train_data, TrainConfig(seed=3))
extracted = extract_rules(model, train_data)
print(format_extracted_rules(extracted))
