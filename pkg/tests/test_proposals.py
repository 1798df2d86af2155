import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aidtrack.camera import CameraModel, DepthFrame
from aidtrack.classes import ClassId
from aidtrack.detection import box_iou
from aidtrack.errors import ConfigurationError
from aidtrack.proposals import (
    DEFAULT_DENSE_SCALES,
    ProposalConfig,
    TemplateSet,
    dense_proposal_array,
    dense_proposals,
    frame_proposals,
    segment_proposals,
)
from aidtrack.segmentation import Segment
from aidtrack.simulation import Actor, Scenario, render_frame

CAM = CameraModel()


def segment_at(center) -> Segment:
    c = np.asarray(center, float)
    return Segment(np.arange(1), c, c[None, :])


def test_template_shapes():
    t = TemplateSet().templates
    assert t[0] == (0.4, 1.75)
    assert t[1][0] > t[0][0] and t[2][0] > t[1][0]
    assert t[3][1] < t[0][1] and t[4][1] < t[1][1]
    assert t[1] == pytest.approx((0.4 * 5 / 3, 1.75))
    assert t[2] == pytest.approx((0.4 * 7 / 3, 1.75))
    assert t[4] == pytest.approx((0.4 * 5 / 3, 1.75 * 0.75))


def test_config_requires_odd_l():
    with pytest.raises(ConfigurationError):
        ProposalConfig(l=4)
    with pytest.raises(ConfigurationError):
        ProposalConfig(stride_px=0)


def test_l1_gives_five_centered_boxes():
    props = segment_proposals(segment_at((0, 0, 3)), CAM, ProposalConfig(l=1))
    assert len(props) == 5
    for p in props:
        assert p.box.center[0] == pytest.approx(CAM.cx)


def test_l3_offsets():
    props = segment_proposals(segment_at((0, 0, 3)), CAM, ProposalConfig(l=3, stride_px=10))
    assert len(props) == 15
    t1 = sorted(p.box.center[0] for p in props if p.template_id == 1)
    assert t1 == pytest.approx([CAM.cx - 10, CAM.cx, CAM.cx + 10])


def test_t1_at_two_metres():
    # 0.4 * 540 / 2 = 108 px, 1.75 * 540 / 2 = 472.5 px
    props = segment_proposals(segment_at((0, 0, 2)), CAM, ProposalConfig(l=1))
    t1 = next(p for p in props if p.template_id == 1).box
    assert t1.width == pytest.approx(108.0)
    assert t1.height == pytest.approx(472.5)
    assert t1.v_min >= 0 and t1.v_max <= 540


def test_boxes_leaving_the_image_are_dropped():
    # centroid just beyond the right border: only leftward slides stay visible
    z = 3.0
    x = (CAM.width - CAM.cx + 30) * z / CAM.fx
    props = segment_proposals(segment_at((x, 0, z)), CAM, ProposalConfig(l=5, stride_px=20))
    assert 0 < len(props) < 25
    for p in props:
        assert p.box.u_min < CAM.width and p.box.u_max > 0


@settings(max_examples=60)
@given(st.floats(-6, 6), st.floats(-1, 1), st.floats(0.6, 7.9), st.sampled_from([1, 3, 5, 7]),
       st.integers(1, 40))
def test_at_most_5l_and_all_intersect_image(x, y, z, l, stride):
    cfg = ProposalConfig(l=l, stride_px=stride)
    props = segment_proposals(segment_at((x, y, z)), CAM, cfg)
    assert len(props) <= 5 * l
    for p in props:
        assert p.box.u_min >= 0 and p.box.u_max <= CAM.width and p.box.width > 0 and p.box.height > 0


def test_dense_single_box():
    cam = CameraModel(fx=100, fy=100, cx=50, cy=50, width=100, height=100)
    # a 1 m square template at 1 m is exactly the 100 x 100 image
    tmpl = TemplateSet(person_width=1.0, person_height=1.0)
    boxes = dense_proposal_array(cam, tmpl, scales=(1.0,), stride_px=7, reference_depth=1.0)
    # T1 fits exactly once; T4 (100 x 75) slides vertically; the wider ones never fit
    sizes = {(b[2] - b[0], b[3] - b[1]) for b in boxes}
    assert (100.0, 100.0) in sizes
    assert sum(1 for b in boxes if b[2] - b[0] == 100 and b[3] - b[1] == 100) == 1


def closed_form_count(cam, templates, scales, stride, ref):
    total = 0
    for s in scales:
        for w, h in templates.templates:
            pw = int(round(w * cam.fx / ref * s))
            ph = int(round(h * cam.fy / ref * s))
            if pw > cam.width or ph > cam.height:
                continue
            total += (math.floor((cam.width - pw) / stride) + 1) * (math.floor((cam.height - ph) / stride) + 1)
    return total


@pytest.mark.parametrize("stride", [8, 10, 16, 23])
def test_dense_count_closed_form(stride):
    t = TemplateSet()
    n = len(dense_proposal_array(CAM, t, DEFAULT_DENSE_SCALES, stride, 2.0))
    assert n == closed_form_count(CAM, t, DEFAULT_DENSE_SCALES, stride, 2.0)


def test_dense_default_count_near_29k():
    n = len(dense_proposal_array(CAM))
    assert n == closed_form_count(CAM, TemplateSet(), DEFAULT_DENSE_SCALES, 10, 2.0)
    assert 25_000 <= n <= 35_000


def test_dense_is_deterministic_list():
    a = dense_proposals(CAM, scales=(1.0,), stride_px=40)
    b = dense_proposals(CAM, scales=(1.0,), stride_px=40)
    assert a == b and len(a) > 0


def test_dense_needs_scales():
    with pytest.raises(ConfigurationError):
        dense_proposal_array(CAM, scales=())


def test_empty_frame_no_proposals():
    fp = frame_proposals(DepthFrame(np.zeros(CAM.shape, np.uint16)), CAM)
    assert fp.proposals == [] and fp.stats["plane_found"] is False


def test_single_person_frame():
    sc = Scenario("one", [Actor(1, ClassId.PEDESTRIAN, [(0.0, 0.3, 3.0)], facing=0.0)])
    frame, gt = render_frame(sc, 0.0)
    fp = frame_proposals(frame, CAM)
    cfg = ProposalConfig()
    assert len(fp.segments) >= 1
    assert len(fp.proposals) >= 5 * cfg.l
    assert max(box_iou(p.box, gt.objects[0].box) for p in fp.proposals) >= 0.5
    assert fp.stats["plane_found"]


def test_three_separated_people_three_segments():
    actors = [Actor(i + 1, c, [(0.0, x, 3.5)], facing=0.0)
              for i, (c, x) in enumerate([(ClassId.PEDESTRIAN, -1.5), (ClassId.WALKER, 0.0),
                                          (ClassId.CRUTCHES, 1.5)])]
    frame, _ = render_frame(Scenario("three", actors), 0.0)
    fp = frame_proposals(frame, CAM)
    assert fp.stats["segments"] == 3
    assert {p.segment_id for p in fp.proposals} == {0, 1, 2}


def test_proposal_count_independent_of_image_size():
    # same person, larger image: proposals scale with people, not pixels
    actor = Actor(1, ClassId.PEDESTRIAN, [(0.0, 0.0, 3.0)], facing=0.0)
    small = CameraModel()
    big = CameraModel(fx=1080, fy=1080, cx=960, cy=540, width=1920, height=1080)
    n = []
    for cam in (small, big):
        frame, _ = render_frame(Scenario("one", [actor]), 0.0, cam)
        n.append(len(frame_proposals(frame, cam).proposals))
    assert n[0] == n[1] == 25
