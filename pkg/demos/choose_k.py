"""Pick K for a mixed fixture by Davies-Bouldin and show what each cluster holds."""

from collections import Counter

from ergan import cluster, data

ds = data.fixture_generate(
    [("morning_peak", 80, 0.05), ("evening_peak", 80, 0.05), ("flat_night", 80, 0.05)], seed=3)

report = cluster.select_k(ds, (2, 8), seed=0)
print("K   DB index")
for K, db in report.candidates:
    mark = "  <- chosen" if K == report.chosen_K else ""
    print(f"{K:<3} {db:.4f}{mark}")

model = cluster.kmeans(ds, report.chosen_K, seed=0)
for k in range(model.K):
    # fixture ids look like "<archetype>_<index>"
    tags = Counter(sid.rsplit("_", 1)[0] for sid, lab in zip(ds.source_ids, model.labels) if lab == k)
    print(f"cluster {k}: {model.sizes[k]} profiles, {dict(tags)}")
