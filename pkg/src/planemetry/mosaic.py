"""Global alignment of ground-plane images via bundle adjustment.

Each image carries a homography into the common plane frame. Edge residuals
are symmetric: both matched pixels are mapped to the plane and differenced
there, so the cost is invariant under relabeling the two images of an edge.
Control-point residuals tie plane coordinates to surveyed world positions
and fix the gauge (alternatively a single anchor image is held frozen).

Per-image updates are 8-parameter multiplicative perturbations (I + D) H
with D[2][2] = 0, renormalized after every accepted step, which avoids the
h33 = 1 chart degeneracy.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import (
    NoGauge,
    SolveDisconnected,
    UnknownImage,
)
from .geometry import (
    CameraIntrinsics,
    CameraPose,
    PixelPoint,
    PlanePoint,
    camera_from_dict,
    load_camera_config,
)
from .homography import Homography, bev_from_camera, estimate_dlt, metric_rectify
from .optim import LmConfig, LmResult, levenberg_marquardt

DENSE_IMAGE_LIMIT = 10  # below this, dense normal equations are cheaper
DEFAULT_EDGE_WEIGHT = 1.0
DEFAULT_CONTROL_WEIGHT = 10.0


@dataclass(frozen=True)
class ImageNode:
    image_id: str
    intrinsics: CameraIntrinsics | None = None
    pose: CameraPose | None = None
    init_h: Homography | None = None
    anchor: bool = False


@dataclass(frozen=True)
class Edge:
    a: str
    b: str
    matches: np.ndarray  # (N, 4) columns u_a, v_a, u_b, v_b

    def __post_init__(self) -> None:
        m = np.asarray(self.matches, dtype=float).reshape(-1, 4)
        object.__setattr__(self, "matches", m)


@dataclass(frozen=True)
class Control:
    image_id: str
    pixel: PixelPoint
    world: PlanePoint


@dataclass
class CorrespondenceGraph:
    images: list[ImageNode]
    edges: list[Edge]
    controls: list[Control] = field(default_factory=list)

    def image_ids(self) -> list[str]:
        return [node.image_id for node in self.images]

    def controls_by_image(self) -> dict[str, list[Control]]:
        out: dict[str, list[Control]] = {}
        for ctrl in self.controls:
            out.setdefault(ctrl.image_id, []).append(ctrl)
        return out

    def validate(self) -> None:
        ids = self.image_ids()
        id_set = set(ids)
        if len(id_set) != len(ids):
            raise ValueError("duplicate image ids in graph")
        for edge in self.edges:
            if edge.a not in id_set or edge.b not in id_set:
                raise UnknownImage(f"edge ({edge.a}, {edge.b}) references an undeclared image")
        for ctrl in self.controls:
            if ctrl.image_id not in id_set:
                raise UnknownImage(f"control point references undeclared image {ctrl.image_id}")

        # Connectivity over edges (single images are trivially connected).
        if len(ids) > 1:
            adjacency: dict[str, set[str]] = {i: set() for i in ids}
            for edge in self.edges:
                adjacency[edge.a].add(edge.b)
                adjacency[edge.b].add(edge.a)
            seen = {ids[0]}
            stack = [ids[0]]
            while stack:
                for nbr in adjacency[stack.pop()]:
                    if nbr not in seen:
                        seen.add(nbr)
                        stack.append(nbr)
            if seen != id_set:
                missing = sorted(id_set - seen)
                raise SolveDisconnected(f"graph is disconnected; unreachable images: {missing}")

        anchors = [n for n in self.images if n.anchor]
        controlled = any(len(c) >= 4 for c in self.controls_by_image().values())
        if controlled:
            pass
        elif len(anchors) == 1:
            if anchors[0].init_h is None:
                raise NoGauge(f"anchor image {anchors[0].image_id} has no frozen homography")
        else:
            raise NoGauge(
                "gauge is not fixed: need one image with >= 4 control points "
                "or exactly one anchor image with a frozen homography"
            )


def initialize(graph: CorrespondenceGraph) -> dict[str, Homography]:
    """Per-image initial homographies into the plane frame.

    Priority per image: an explicit initial homography, then the coarse
    bird's-eye map from camera geometry, then metric rectification from its
    own control points; anything still open is chained over spanning-tree
    edges from already-initialized neighbours via pairwise DLT.
    """
    graph.validate()
    controls = graph.controls_by_image()
    init: dict[str, Homography] = {}
    for node in graph.images:
        if node.init_h is not None:
            init[node.image_id] = node.init_h
        elif node.pose is not None and node.intrinsics is not None:
            init[node.image_id] = bev_from_camera(node.intrinsics, node.pose, 1.0)
        elif len(controls.get(node.image_id, [])) >= 4:
            ctrls = controls[node.image_id]
            h, _ = metric_rectify([c.pixel for c in ctrls], [c.world for c in ctrls])
            init[node.image_id] = h

    if not init:
        raise NoGauge("no image provides a pose, initial homography, or enough control points")

    # Chain pairwise estimates outward from the initialized set.
    pending = [n.image_id for n in graph.images if n.image_id not in init]
    edges_by_image: dict[str, list[Edge]] = {}
    for edge in graph.edges:
        edges_by_image.setdefault(edge.a, []).append(edge)
        edges_by_image.setdefault(edge.b, []).append(edge)
    while pending:
        progressed = False
        for image_id in list(pending):
            for edge in edges_by_image.get(image_id, []):
                other = edge.b if edge.a == image_id else edge.a
                if other not in init:
                    continue
                if edge.a == image_id:
                    src, dst = edge.matches[:, 0:2], edge.matches[:, 2:4]
                else:
                    src, dst = edge.matches[:, 2:4], edge.matches[:, 0:2]
                h_rel, _ = estimate_dlt(src, dst)  # this image's pixels -> other's pixels
                init[image_id] = init[other] @ h_rel
                pending.remove(image_id)
                progressed = True
                break
        if not progressed:
            raise SolveDisconnected(f"cannot initialize images {sorted(pending)} from the graph")
    return init


@dataclass
class BaSolution:
    homographies: dict[str, Homography]
    initial_cost: float
    final_cost: float
    iterations: int
    converged: bool
    per_edge_rms: dict[tuple[str, str], float]
    cost_trace: list[float]

    def to_dict(self) -> dict:
        return {
            "homographies": {k: h.m.ravel().tolist() for k, h in self.homographies.items()},
            "initial_cost": self.initial_cost,
            "final_cost": self.final_cost,
            "iterations": self.iterations,
            "converged": self.converged,
            "per_edge_rms": {f"{a}|{b}": v for (a, b), v in self.per_edge_rms.items()},
            "cost_trace": self.cost_trace,
        }

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "BaSolution":
        return cls(
            homographies={k: Homography(np.asarray(v).reshape(3, 3))
                          for k, v in d["homographies"].items()},
            initial_cost=d["initial_cost"],
            final_cost=d["final_cost"],
            iterations=d["iterations"],
            converged=d["converged"],
            per_edge_rms={tuple(k.split("|", 1)): v for k, v in d["per_edge_rms"].items()},
            cost_trace=d["cost_trace"],
        )

    @classmethod
    def load(cls, path: str) -> "BaSolution":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _to_plane(h: np.ndarray, pixels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return (homogeneous (N,3), dehomogenized (N,2)) plane coordinates."""
    y = np.column_stack([pixels, np.ones(len(pixels))]) @ h.T
    return y, y[:, :2] / y[:, 2:3]


def _point_jacobian_block(y: np.ndarray, z: np.ndarray) -> np.ndarray:
    """(N, 2, 8) Jacobian of dehomogenized plane points w.r.t. the 8 update
    parameters of a left-multiplicative perturbation (I + D) at D = 0."""
    n = len(y)
    inv_w = 1.0 / y[:, 2]
    J = np.zeros((n, 2, 8))
    # Param order: D00 D01 D02 D10 D11 D12 D20 D21; dy/dD_jk = e_j * y_k.
    for k in range(3):
        J[:, 0, k] = inv_w * y[:, k]          # D0k moves z_x
        J[:, 1, 3 + k] = inv_w * y[:, k]      # D1k moves z_y
    for k in range(2):
        J[:, 0, 6 + k] = -z[:, 0] * inv_w * y[:, k]  # D2k scales the denominator
        J[:, 1, 6 + k] = -z[:, 1] * inv_w * y[:, k]
    return J


class _BaProblem:
    """Residual/Jacobian assembly over the free images of a graph."""

    def __init__(self, graph: CorrespondenceGraph, init: dict[str, Homography],
                 edge_weight: float, control_weight: float, use_sparse: bool):
        self.graph = graph
        self.free_ids = [n.image_id for n in graph.images if not n.anchor]
        self.index = {image_id: i for i, image_id in enumerate(self.free_ids)}
        self.sqrt_we = np.sqrt(edge_weight)
        self.sqrt_wc = np.sqrt(control_weight)
        self.use_sparse = use_sparse
        self.n_res = sum(2 * len(e.matches) for e in graph.edges) + 2 * len(graph.controls)
        self.x0 = {k: h.m.copy() for k, h in init.items()}

    def residuals(self, state: dict[str, np.ndarray]) -> np.ndarray:
        parts = []
        for edge in self.graph.edges:
            _, za = _to_plane(state[edge.a], edge.matches[:, 0:2])
            _, zb = _to_plane(state[edge.b], edge.matches[:, 2:4])
            parts.append(self.sqrt_we * (za - zb).ravel())
        for ctrl in self.graph.controls:
            _, z = _to_plane(state[ctrl.image_id], np.array([[ctrl.pixel.u, ctrl.pixel.v]]))
            parts.append(self.sqrt_wc * (z[0] - np.array(ctrl.world)))
        return np.concatenate(parts) if parts else np.zeros(0)

    def jacobian(self, state: dict[str, np.ndarray]):
        n_params = 8 * len(self.free_ids)
        if self.use_sparse:
            rows: list[np.ndarray] = []
            cols: list[np.ndarray] = []
            vals: list[np.ndarray] = []

            def put(block: np.ndarray, row0: int, image_id: str) -> None:
                if image_id not in self.index:
                    return
                col0 = 8 * self.index[image_id]
                n = block.shape[0]
                r = row0 + np.repeat(np.arange(2 * n), 8)
                c = col0 + np.tile(np.arange(8), 2 * n)
                rows.append(r)
                cols.append(c)
                vals.append(block.reshape(-1))
        else:
            J = np.zeros((self.n_res, n_params))

            def put(block: np.ndarray, row0: int, image_id: str) -> None:
                if image_id not in self.index:
                    return
                col0 = 8 * self.index[image_id]
                n = block.shape[0]
                J[row0:row0 + 2 * n, col0:col0 + 8] += block.reshape(2 * n, 8)

        row = 0
        for edge in self.graph.edges:
            ya, za = _to_plane(state[edge.a], edge.matches[:, 0:2])
            yb, zb = _to_plane(state[edge.b], edge.matches[:, 2:4])
            put(self.sqrt_we * _point_jacobian_block(ya, za), row, edge.a)
            put(-self.sqrt_we * _point_jacobian_block(yb, zb), row, edge.b)
            row += 2 * len(edge.matches)
        for ctrl in self.graph.controls:
            pix = np.array([[ctrl.pixel.u, ctrl.pixel.v]])
            y, z = _to_plane(state[ctrl.image_id], pix)
            put(self.sqrt_wc * _point_jacobian_block(y, z), row, ctrl.image_id)
            row += 2

        if self.use_sparse:
            if not rows:
                return sp.csr_matrix((self.n_res, n_params))
            return sp.coo_matrix(
                (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                shape=(self.n_res, n_params),
            ).tocsr()
        return J

    def retract(self, state: dict[str, np.ndarray], delta: np.ndarray) -> dict[str, np.ndarray]:
        new_state = dict(state)
        for image_id, i in self.index.items():
            d = delta[8 * i:8 * i + 8]
            D = np.array([
                [d[0], d[1], d[2]],
                [d[3], d[4], d[5]],
                [d[6], d[7], 0.0],
            ])
            m = (np.eye(3) + D) @ state[image_id]
            m = m / np.linalg.norm(m)
            anchor = m[2, 2] if abs(m[2, 2]) > 1e-9 else m.flat[np.argmax(np.abs(m))]
            if anchor < 0:
                m = -m
            new_state[image_id] = m
        return new_state


def _edge_pixel_rms(graph: CorrespondenceGraph, homs: dict[str, Homography]) -> dict[tuple[str, str], float]:
    """Symmetric transfer error per edge, in pixels."""
    out: dict[tuple[str, str], float] = {}
    for edge in graph.edges:
        h_ab = homs[edge.b].inverse() @ homs[edge.a]
        pa, pb = edge.matches[:, 0:2], edge.matches[:, 2:4]
        fwd = h_ab.apply_many(pa) - pb
        bwd = h_ab.inverse().apply_many(pb) - pa
        sq = np.concatenate([np.sum(fwd**2, axis=1), np.sum(bwd**2, axis=1)])
        out[(edge.a, edge.b)] = float(np.sqrt(np.mean(sq)))
    return out


def solve(
    graph: CorrespondenceGraph,
    config: LmConfig | None = None,
    edge_weight: float = DEFAULT_EDGE_WEIGHT,
    control_weight: float = DEFAULT_CONTROL_WEIGHT,
    init: dict[str, Homography] | None = None,
) -> BaSolution:
    """Bundle-adjust all non-anchored homographies of the graph."""
    graph.validate()
    if init is None:
        init = initialize(graph)
    config = config or LmConfig()

    use_sparse = len(graph.images) >= DENSE_IMAGE_LIMIT
    problem = _BaProblem(graph, init, edge_weight, control_weight, use_sparse)
    result: LmResult = levenberg_marquardt(
        problem.residuals, problem.jacobian, problem.x0, config, problem.retract,
    )
    homs = {k: Homography(m) for k, m in result.state.items()}
    # Anchored matrices must come through bit-identical.
    for node in graph.images:
        if node.anchor:
            homs[node.image_id] = init[node.image_id]
    return BaSolution(
        homographies=homs,
        initial_cost=result.initial_cost,
        final_cost=result.final_cost,
        iterations=result.iterations,
        converged=result.converged,
        per_edge_rms=_edge_pixel_rms(graph, homs),
        cost_trace=result.cost_trace,
    )


@dataclass(frozen=True)
class HoldoutReport:
    per_point: list[float]  # world-frame error per holdout point, meters
    rms: float | None       # None when the holdout set is empty
    max: float | None


def evaluate(
    solution: BaSolution,
    holdout: list[tuple[str, PixelPoint, PlanePoint]],
) -> HoldoutReport:
    """World-frame errors of held-out control points under a solved mosaic."""
    errors: list[float] = []
    for image_id, pixel, world in holdout:
        if image_id not in solution.homographies:
            raise UnknownImage(f"holdout point references unsolved image {image_id}")
        est = solution.homographies[image_id].apply(pixel)
        errors.append(float(np.hypot(est[0] - world.x, est[1] - world.y)))
    if not errors:
        return HoldoutReport(per_point=[], rms=None, max=None)
    arr = np.asarray(errors)
    return HoldoutReport(per_point=errors, rms=float(np.sqrt(np.mean(arr**2))), max=float(arr.max()))


def load_graph(path: str) -> CorrespondenceGraph:
    """Read a correspondence-graph JSON file."""
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    images = []
    for entry in data["images"]:
        intr = pose = None
        camera = entry.get("camera")
        if isinstance(camera, str):
            intr, pose = load_camera_config(camera)
        elif isinstance(camera, dict):
            intr, pose = camera_from_dict(camera)
        init_h = Homography(np.asarray(entry["h"], dtype=float).reshape(3, 3)) if "h" in entry else None
        images.append(ImageNode(
            image_id=str(entry["id"]),
            intrinsics=intr,
            pose=pose,
            init_h=init_h,
            anchor=bool(entry.get("anchor", False)),
        ))
    edges = [Edge(str(e["a"]), str(e["b"]), np.asarray(e["matches"], dtype=float))
             for e in data.get("edges", [])]
    controls = [
        Control(str(c[0]), PixelPoint(float(c[1]), float(c[2])), PlanePoint(float(c[3]), float(c[4])))
        for c in data.get("controls", [])
    ]
    return CorrespondenceGraph(images=images, edges=edges, controls=controls)


def save_graph(graph: CorrespondenceGraph, path: str) -> None:
    from .geometry import camera_to_dict

    data = {
        "images": [],
        "edges": [{"a": e.a, "b": e.b, "matches": e.matches.tolist()} for e in graph.edges],
        "controls": [[c.image_id, c.pixel.u, c.pixel.v, c.world.x, c.world.y]
                     for c in graph.controls],
    }
    for node in graph.images:
        entry: dict = {"id": node.image_id}
        if node.intrinsics is not None and node.pose is not None:
            entry["camera"] = camera_to_dict(node.intrinsics, node.pose)
        if node.init_h is not None:
            entry["h"] = node.init_h.m.ravel().tolist()
        if node.anchor:
            entry["anchor"] = True
        data["images"].append(entry)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh)
