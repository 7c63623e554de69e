"""Quick end-to-end check of the adgan Python module."""

import os
import tempfile

import adgan

data = adgan.Dataset.synthetic(seed=3, n_total=600, n_paired=120, collision_count=5)
print("paired", data.n_paired, "unpaired", data.n_unpaired, "test", data.n_test)

config = adgan.TrainConfig("desk", step=5, seed=1, strategy="oversample")
print(config)
model, log = adgan.Model.train(data, config)
assert len(log) == 5
assert all(set(r) >= {"epoch", "d_total", "g_total"} for r in log)

metrics = model.evaluate(data)
assert 0.0 <= metrics["accuracy"] <= 1.0
assert len(metrics["per_class_f1"]) == 4
print("adgan", metrics)
print("baseline", data.baseline())

u, s, labels = data.test_split()
pred = model.predict(u, s)
assert adgan.compute_metrics(labels, pred) == metrics

with tempfile.TemporaryDirectory() as tmp:
    path = os.path.join(tmp, "model.txt")
    model.save(path)
    again = adgan.Model.load(path)
    assert again == model
    assert again.evaluate(data) == metrics

try:
    adgan.TrainConfig("desk", step=0)
except ValueError as e:
    print("rejected:", e)
else:
    raise AssertionError("step=0 accepted")

print("ok")
