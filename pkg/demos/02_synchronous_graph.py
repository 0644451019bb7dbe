"""What the synchronous graph and its mask look like.

Builds the M*N-vertex graph for three vertices over four steps, prints its
block layout, and shows that the learnable mask starts as a no-op and only
ever rescales existing edges.

    python3 demos/02_synchronous_graph.py
"""

import numpy as np

from stsgt.graph import apply_mask, build_spatial_adjacency, build_sync_adjacency, vertex_index
from stsgt.autograd import Tensor

coords = [[0.0, 0.0], [0.25, 0.0], [1.0, 0.1]]
spatial = build_spatial_adjacency(coords, threshold=0.3, vertex_names=["a", "b", "c"])
print("spatial adjacency (similarity = 1 - normalised distance):")
print(np.round(spatial.adjacency, 3))

m = 4
sync = build_sync_adjacency(spatial, m)
print(f"\nsynchronous adjacency, {m} steps x {spatial.num_vertices} vertices:")
for row in sync.adjacency:
    print(" ".join("." if v == 0 else ("1" if v == 1 else "w") for v in row))
print("w = spatial edge inside a step, 1 = same vertex at the neighbouring step")

i, j = vertex_index(2, 1, 3) - 1, vertex_index(3, 1, 3) - 1
print(f"\nvertex a at step 2 is row {i}; its copy at step 3 is row {j}; edge weight {sync.adjacency[i, j]}")

nnz = np.count_nonzero
print(f"non-zeros: {nnz(sync.adjacency)} = {m} * {nnz(spatial.adjacency)} + 2 * {m - 1} * {spatial.num_vertices}")

fresh = apply_mask(sync, Tensor(np.ones_like(sync.adjacency))).data
print(f"\nall-ones mask leaves the graph unchanged: {np.array_equal(fresh, sync.adjacency)}")
random_mask = np.random.default_rng(0).uniform(0, 3, sync.adjacency.shape)
masked = apply_mask(sync, Tensor(random_mask)).data
print(f"any mask keeps the zero pattern: {not masked[sync.adjacency == 0].any()}")
