"""Text exports of fields for external plotting."""
import numpy as np

from .space import Field


def write_field_csv(field: Field, path):
    """``x,y,component_0[,component_1]`` sampled at the dof nodes."""
    sp = field.space
    vals = field.nodal()
    header = ["x", "y"] + [f"component_{i}" for i in range(sp.components)]
    data = np.column_stack([sp.node_coords, vals])
    np.savetxt(path, data, delimiter=",", header=",".join(header), comments="", fmt="%.12g")


def write_cell_dump(field: Field, path):
    """One line per cell: the three vertex coordinates and the values there."""
    sp = field.space
    mesh = sp.mesh
    vals = field.nodal()[mesh.cells]  # vertices are the first local nodes
    with open(path, "w") as f:
        f.write(f"# cells {mesh.n_cells} components {sp.components}\n")
        for cell, v in zip(mesh.vertices[mesh.cells], vals):
            parts = [f"{x:.12g} {y:.12g} " + " ".join(f"{c:.12g}" for c in vv)
                     for (x, y), vv in zip(cell, v)]
            f.write(" | ".join(parts) + "\n")
