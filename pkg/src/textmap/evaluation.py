"""
evaluation
----------

IoU-based one-to-one matching of detected against ground-truth boxes,
and corpus-level precision, recall & hmean.

"""
import dataclasses
import json
import logging
import pathlib

import numpy
import scipy.optimize

from . import baseio
from .baseio import InvalidArgument
from .dataset import AnnotationRecord, read_annotation_file, serialize_annotation


LOG = logging.getLogger(__name__)


def _rect(box):
    return box.bounds() if hasattr(box, 'bounds') else tuple(box)


def iou(a, b):
    """Intersection over union of the axis-aligned bounding rectangles
    of ``a`` and ``b``.

    Boxes may be ``QuadBox`` or ``(x0, y0, x1, y1)``. A zero-area pair
    has IoU 0.

    """
    (ax0, ay0, ax1, ay1) = _rect(a)
    (bx0, by0, bx1, by1) = _rect(b)

    inter_w = min(ax1, bx1) - max(ax0, bx0)
    inter_h = min(ay1, by1) - max(ay0, by0)
    intersection = max(0.0, inter_w) * max(0.0, inter_h)

    union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - intersection
    if union <= 0:
        return 0.0

    return float(intersection / union)


def iou_matrix(detections, ground_truth):
    return numpy.array(
        [[iou(det, gt) for gt in ground_truth] for det in detections],
        dtype=numpy.float64,
    ).reshape(len(detections), len(ground_truth))


@dataclasses.dataclass(frozen=True)
class MatchParams:

    iou_threshold: float = 0.5
    matching: str = 'greedy'

    MATCHINGS = ('greedy', 'optimal')

    def __post_init__(self):
        if not 0 < self.iou_threshold <= 1:
            raise InvalidArgument(f"iou_threshold must be in (0, 1]: {self.iou_threshold}")
        if self.matching not in self.MATCHINGS:
            raise InvalidArgument(f"matching must be one of {self.MATCHINGS}: {self.matching!r}")


def greedy_pairs(overlaps, threshold):
    """Pairs ``(det, gt)`` chosen greedily by descending IoU, each index
    used at most once.

    Ties are broken by detection then ground-truth index.

    """
    (rows, columns) = numpy.nonzero(overlaps >= threshold)
    candidates = sorted(
        zip(rows.tolist(), columns.tolist()),
        key=lambda pair: (-overlaps[pair], pair[0], pair[1]),
    )

    (used_det, used_gt) = (set(), set())
    pairs = []
    for (det, gt) in candidates:
        if det in used_det or gt in used_gt:
            continue
        used_det.add(det)
        used_gt.add(gt)
        pairs.append((det, gt))

    return pairs


def optimal_pairs(overlaps, threshold):
    """Pairs of a maximum-cardinality one-to-one assignment among
    ``IoU >= threshold`` candidates.

    """
    if not overlaps.size:
        return []

    eligible = (overlaps >= threshold).astype(numpy.float64)
    (rows, columns) = scipy.optimize.linear_sum_assignment(eligible, maximize=True)
    return [(det, gt) for (det, gt) in zip(rows.tolist(), columns.tolist()) if eligible[det, gt]]


def count_matches(detections, ground_truth, params=MatchParams()):
    overlaps = iou_matrix(detections, ground_truth)
    match = greedy_pairs if params.matching == 'greedy' else optimal_pairs
    return len(match(overlaps, params.iou_threshold))


@dataclasses.dataclass(frozen=True)
class EvalReport:

    precision: float
    recall: float
    hmean: float
    matched: int
    num_detections: int
    num_ground_truth: int

    @classmethod
    def from_counts(cls, matched, num_detections, num_ground_truth):
        """Report of the given counts.

        Recall is 1 without ground truth; precision is 0 without
        detections (unless neither exists, in which case all scores are
        1).

        """
        if matched > min(num_detections, num_ground_truth):
            raise InvalidArgument(
                f"matched {matched} exceeds detections {num_detections} "
                f"or ground truth {num_ground_truth}"
            )

        if num_detections == 0 and num_ground_truth == 0:
            LOG.warning("neither detections nor ground truth: scoring as perfect")
            return cls(1.0, 1.0, 1.0, 0, 0, 0)

        precision = matched / num_detections if num_detections else 0.0
        recall = matched / num_ground_truth if num_ground_truth else 1.0
        hmean = (2 * precision * recall / (precision + recall)) if precision + recall else 0.0

        return cls(precision, recall, hmean, matched, num_detections, num_ground_truth)

    def to_dict(self):
        return dataclasses.asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + '\n'

    def summary(self):
        (precision, recall, hmean) = (round(value, 6) for value in (self.precision, self.recall, self.hmean))
        return f"precision={precision} recall={recall} hmean={hmean}"


def evaluate_image(detections, ground_truth, params=MatchParams()):
    """Report of the detections of a single image."""
    matched = count_matches(detections, ground_truth, params)
    return EvalReport.from_counts(matched, len(detections), len(ground_truth))


def evaluate(detections, ground_truth, params=MatchParams()):
    """Micro-averaged report over a corpus.

    ``detections`` and ``ground_truth`` map image keys to lists of boxes.

    """
    if set(detections) != set(ground_truth):
        missing = sorted(set(ground_truth) ^ set(detections))
        raise InvalidArgument(f"detection and ground-truth keys differ: {missing[:5]}")

    (matched, num_detections, num_ground_truth) = (0, 0, 0)
    for key in sorted(ground_truth):
        report = evaluate_image(detections[key], ground_truth[key], params)
        LOG.debug("%s: %s", key, report.summary())
        matched += report.matched
        num_detections += report.num_detections
        num_ground_truth += report.num_ground_truth

    return EvalReport.from_counts(matched, num_detections, num_ground_truth)


def brute_force_matches(detections, ground_truth, threshold=0.5):
    """Size of the largest one-to-one matching, found exhaustively over
    subsets of ground truth.

    Exponential in the number of ground-truth boxes; intended for small
    instances.

    """
    overlaps = iou_matrix(detections, ground_truth)
    eligible = overlaps >= threshold
    num_gt = eligible.shape[1]

    # best[used] over ground-truth subsets, extended one detection at a time
    best = {0: 0}
    for row in eligible:
        extended = dict(best)
        for (used, count) in best.items():
            for gt in range(num_gt):
                bit = 1 << gt
                if row[gt] and not used & bit:
                    key = used | bit
                    extended[key] = max(extended.get(key, 0), count + 1)
        best = extended

    return max(best.values())


# box directories #

BOX_SUFFIX = '.txt'


def write_box_dir(directory, boxes):
    """Write per-image box lists as annotation files of the same stem.

    ``boxes`` maps image stems to lists of ``QuadBox``.

    """
    directory = pathlib.Path(directory)
    for (stem, quads) in boxes.items():
        records = [AnnotationRecord(quad) for quad in quads]
        baseio.write_text(directory / f'{stem}{BOX_SUFFIX}', serialize_annotation(records))


def read_box_dir(directory):
    """Read a directory of annotation files into per-stem ``QuadBox``
    lists.

    """
    directory = pathlib.Path(directory)
    if not directory.is_dir():
        raise baseio.DataError(f"{directory}: not a directory")

    return {
        path.stem: [record.quad for record in read_annotation_file(path)]
        for path in sorted(directory.glob(f'*{BOX_SUFFIX}'))
    }
