# g2o record templates, matched against whitespace-normalized lines.
# A trailing {info} holds the upper-triangular information matrix.
vertex_se2 = "VERTEX_SE2 {id:d} {x:g} {y:g} {theta:g}"
vertex_se3 = "VERTEX_SE3:QUAT {id:d} {x:g} {y:g} {z:g} {qx:g} {qy:g} {qz:g} {qw:g}"
vertex_xy = "VERTEX_XY {id:d} {x:g} {y:g}"
vertex_trackxyz = "VERTEX_TRACKXYZ {id:d} {x:g} {y:g} {z:g}"
edge_se2 = "EDGE_SE2 {i:d} {j:d} {dx:g} {dy:g} {dtheta:g} {info}"
edge_se3 = "EDGE_SE3:QUAT {i:d} {j:d} {dx:g} {dy:g} {dz:g} {qx:g} {qy:g} {qz:g} {qw:g} {info}"
edge_se2_xy = "EDGE_SE2_XY {i:d} {j:d} {dx:g} {dy:g} {info}"
edge_se3_trackxyz = "EDGE_SE3_TRACKXYZ {i:d} {j:d} {dx:g} {dy:g} {dz:g} {info}"
edge_range = "EDGE_RANGE {i:d} {j:d} {dist:g} {precision:g}"

# tag -> (template, ambient dimension or None, information matrix size)
RECORDS = {
    "VERTEX_SE2": (vertex_se2, 2, 0),
    "VERTEX_SE3:QUAT": (vertex_se3, 3, 0),
    "VERTEX_XY": (vertex_xy, 2, 0),
    "VERTEX_TRACKXYZ": (vertex_trackxyz, 3, 0),
    "EDGE_SE2": (edge_se2, 2, 3),
    "EDGE_SE3:QUAT": (edge_se3, 3, 6),
    "EDGE_SE2_XY": (edge_se2_xy, 2, 2),
    "EDGE_SE3_TRACKXYZ": (edge_se3_trackxyz, 3, 3),
    "EDGE_RANGE": (edge_range, None, 0),
}
