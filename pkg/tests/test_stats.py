import numpy as np
import pytest
from scipy.ndimage import gaussian_filter

from fieldvision.detections import BALL, ROBOT
from fieldvision.errors import DataError
from fieldvision.field_model import default_field_document, load_field_model
from fieldvision.localization import FieldTrackPoint, RadarFrame
from fieldvision.rules import GOAL, PASS, SHOT, SHOT_ON_TARGET, GameEvent
from fieldvision.stats import (
    BALL_ENTITY,
    HeatmapGrid,
    PossessionTally,
    _histogram,
    heatmap,
    heatmap_to_csv,
    pass_shot_map,
    possession,
    render_heatmap,
    render_pass_shot_map,
    render_trackmap,
    scoreboard,
    trackmap,
)


@pytest.fixture(scope="module")
def model():
    return load_field_model(default_field_document())


def ball_frames(positions):
    return [RadarFrame(frame=f, points=[
        FieldTrackPoint(f, 99, BALL, float(x), float(y))])
        for f, (x, y) in enumerate(positions)]


# heatmap -----------------------------------------------------------------------

def test_stationary_entity_peaks_at_its_cell(model):
    frames = ball_frames([(2050.0, 1050.0)] * 40)
    hm = heatmap(frames, model)
    assert hm.argmax_cell() == (10, 20)
    assert hm.grid.max() == pytest.approx(1.0)
    assert hm.grid.min() >= 0.0


def test_zero_sigma_is_raw_histogram(model):
    frames = ball_frames([(150.0, 250.0)] * 3 + [(850.0, 250.0)])
    hm = heatmap(frames, model, blur_sigma=0.0)
    assert hm.grid[2, 1] == pytest.approx(1.0)  # 3 counts, the max
    assert hm.grid[2, 8] == pytest.approx(1.0 / 3.0)
    assert hm.grid.sum() == pytest.approx(1.0 + 1.0 / 3.0)


def test_unknown_entity_raises(model):
    frames = ball_frames([(100.0, 100.0)])
    with pytest.raises(DataError):
        heatmap(frames, model, entity=123)


def test_blur_conserves_interior_mass(model):
    # all points far from the border: blurred mass equals the point count
    rng = np.random.default_rng(1)
    pts = [FieldTrackPoint(f, 1, ROBOT,
                           float(rng.uniform(2000, 7000)),
                           float(rng.uniform(2000, 4000)))
           for f in range(200)]
    frames = [RadarFrame(frame=p.frame, points=[p]) for p in pts]
    raw = _histogram([p for p in pts], model, 100.0)
    blurred = gaussian_filter(raw, sigma=1.5, mode="constant")
    assert raw.sum() == pytest.approx(200.0)
    assert blurred.sum() == pytest.approx(200.0, abs=1e-6)
    hm = heatmap(frames, model, entity=1)
    assert 0.0 <= hm.grid.min() and hm.grid.max() == pytest.approx(1.0)


def test_uniform_coverage_is_flat_inside(model):
    rows = int(model.width // 100)
    cols = int(model.length // 100)
    positions = [(c * 100.0 + 50.0, r * 100.0 + 50.0)
                 for r in range(rows) for c in range(cols)]
    hm = heatmap(ball_frames(positions), model)
    interior = hm.grid[8:rows - 8, 8:cols - 8]
    cv = interior.std() / interior.mean()
    assert cv < 0.1


def test_out_of_field_points_do_not_count(model):
    frames = ball_frames([(100.0, 100.0), (-400.0, 100.0)])
    hm = heatmap(frames, model, blur_sigma=0.0)
    assert hm.grid.sum() == pytest.approx(1.0)


def test_heatmap_csv(tmp_path):
    hm = HeatmapGrid(grid=np.array([[0.0, 1.0], [0.25, 0.5]]),
                     cell_mm=100.0, extent=(200.0, 200.0))
    path = tmp_path / "grid.csv"
    heatmap_to_csv(hm, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "0.000000,1.000000"
    assert lines[1] == "0.250000,0.500000"


def test_render_heatmap_deterministic(model):
    frames = ball_frames([(4500.0, 3000.0)] * 10)
    hm = heatmap(frames, model)
    a = render_heatmap(hm, model)
    b = render_heatmap(hm, model)
    assert a.tobytes() == b.tobytes()
    assert a.size == model.plan_size()


# trackmap ----------------------------------------------------------------------

def test_contiguous_track_single_polyline(model):
    positions = [(1000.0 + 10.0 * f, 2000.0) for f in range(50)]
    lines = trackmap(ball_frames(positions), BALL_ENTITY)
    assert len(lines) == 1
    assert len(lines[0]) == 50
    # exact pass-through of localized positions
    assert lines[0][7] == (7, 1070.0, 2000.0)


def test_gap_splits_polylines(model):
    frames = ball_frames([(1000.0, 2000.0)] * 30)
    frames = frames[:5] + [RadarFrame(frame=fr.frame + 20, points=[
        FieldTrackPoint(fr.frame + 20, 99, BALL, 3000.0, 2000.0)])
        for fr in frames[5:10]]
    lines = trackmap(frames, BALL_ENTITY)
    assert len(lines) == 2
    assert len(lines[0]) == 5 and len(lines[1]) == 5


def test_gap_exactly_at_break_keeps_one_polyline(model):
    frames = [RadarFrame(frame=f, points=[
        FieldTrackPoint(f, 99, BALL, 1000.0, 1000.0)]) for f in (0, 10)]
    assert len(trackmap(frames, BALL_ENTITY, gap_break=10)) == 1
    assert len(trackmap(frames, BALL_ENTITY, gap_break=9)) == 2


def test_render_trackmap_deterministic(model):
    positions = [(1000.0 + 40.0 * f, 2000.0 + 15.0 * f) for f in range(40)]
    lines = trackmap(ball_frames(positions), BALL_ENTITY)
    a = render_trackmap(lines, model)
    b = render_trackmap(lines, model)
    assert a.tobytes() == b.tobytes()


# possession --------------------------------------------------------------------

def frame_with(f, ball_xy, robots):
    pts = [FieldTrackPoint(f, 99, BALL, *ball_xy)]
    pts += [FieldTrackPoint(f, 1 + i, ROBOT, x, y, team=team)
            for i, (team, x, y) in enumerate(robots)]
    return RadarFrame(frame=f, points=pts)


def test_ball_glued_to_team0():
    frames = [frame_with(f, (1000.0, 1000.0),
                         [(0, 1010.0, 1000.0), (1, 5000.0, 5000.0)])
              for f in range(100)]
    tally = possession(frames)
    assert (tally.frames_team0, tally.frames_team1) == (100, 0)
    assert tally.percentages() == (100.0, 0.0)


def test_equidistant_goes_to_team1():
    frames = [frame_with(0, (3000.0, 3000.0),
                         [(0, 2000.0, 3000.0), (1, 4000.0, 3000.0)])]
    tally = possession(frames)
    assert tally.frames_team1 == 1 and tally.frames_team0 == 0


def test_alternating_halves_split_evenly():
    frames = []
    for f in range(100):
        if f % 2 == 0:
            frames.append(frame_with(f, (1000.0, 1000.0),
                                     [(0, 1010.0, 1000.0),
                                      (1, 8000.0, 5000.0)]))
        else:
            frames.append(frame_with(f, (8000.0, 5000.0),
                                     [(0, 1010.0, 1000.0),
                                      (1, 8010.0, 5000.0)]))
    tally = possession(frames)
    assert abs(tally.frames_team0 - tally.frames_team1) <= 1
    p0, p1 = tally.percentages()
    assert p0 + p1 == pytest.approx(100.0, abs=0.01)


def test_missing_team_is_unattributed():
    frames = [frame_with(0, (1000.0, 1000.0), [(0, 1010.0, 1000.0)])]
    tally = possession(frames)
    assert tally.frames_unattributed == 1
    assert tally.attributed == 0
    assert tally.percentages() == (0.0, 0.0)


def test_frames_without_ball_not_counted():
    fr = RadarFrame(frame=0, points=[
        FieldTrackPoint(0, 1, ROBOT, 100.0, 100.0, team=0),
        FieldTrackPoint(0, 2, ROBOT, 200.0, 100.0, team=1)])
    tally = possession([fr])
    assert (tally.frames_team0 + tally.frames_team1
            + tally.frames_unattributed) == 0


def test_percentage_sum_property():
    rng = np.random.default_rng(5)
    for _ in range(50):
        t = PossessionTally(frames_team0=int(rng.integers(1, 5000)),
                            frames_team1=int(rng.integers(1, 5000)),
                            frames_unattributed=int(rng.integers(0, 100)))
        p0, p1 = t.percentages()
        assert p0 + p1 == pytest.approx(100.0, abs=0.01)


# pass and shot map ----------------------------------------------------------------

def test_pass_segment_length_within_bounds(model):
    ball = {0: (1000.0, 1000.0), 5: (1600.0, 1000.0)}
    events = [GameEvent(type=PASS, frame=0, team=0)]
    segs = pass_shot_map(events, ball, window=5)
    assert len(segs) == 1
    d_px = np.hypot(segs[0].end[0] - segs[0].start[0],
                    segs[0].end[1] - segs[0].start[1]) * model.model_image_scale
    assert 50.0 < d_px < 70.0


def test_zero_events_field_only_image(model):
    from fieldvision.localization import render_radar
    img = render_pass_shot_map([], model)
    base = render_radar(RadarFrame(frame=0), model).convert("RGB")
    assert img.tobytes() == base.tobytes()


def test_pass_shot_render_deterministic(model):
    ball = {0: (2000.0, 3000.0), 5: (1000.0, 3000.0),
            12: (800.0, 3000.0), 17: (-100.0, 3000.0)}
    events = [GameEvent(type=SHOT, frame=0, team=0,
                        detail=(("side", "left"),)),
              GameEvent(type=GOAL, frame=12, team=0,
                        detail=(("side", "left"),))]
    segs = pass_shot_map(events, ball, window=5)
    assert len(segs) == 2
    a = render_pass_shot_map(segs, model)
    b = render_pass_shot_map(segs, model)
    assert a.tobytes() == b.tobytes()


def test_segments_filter_by_team(model):
    ball = {0: (1000.0, 1000.0), 5: (1600.0, 1000.0),
            10: (2000.0, 2000.0), 15: (2600.0, 2000.0)}
    events = [GameEvent(type=PASS, frame=0, team=0),
              GameEvent(type=PASS, frame=10, team=1)]
    segs = pass_shot_map(events, ball, window=5)
    img0 = render_pass_shot_map(segs, model, team=0)
    img1 = render_pass_shot_map(segs, model, team=1)
    assert img0.tobytes() != img1.tobytes()


def test_event_without_window_end_skipped(model):
    ball = {0: (1000.0, 1000.0)}
    events = [GameEvent(type=PASS, frame=0, team=0)]
    assert pass_shot_map(events, ball, window=5) == []


# scoreboard ---------------------------------------------------------------------

def scripted_events():
    ev = []
    for f in (10, 200):
        ev.append(GameEvent(type=GOAL, frame=f, team=0,
                            detail=(("side", "right"),)))
    for f in (10, 200, 400):
        ev.append(GameEvent(type=SHOT_ON_TARGET, frame=f, team=0,
                            detail=(("side", "right"),)))
    for f in (10, 200, 400, 600, 800):
        ev.append(GameEvent(type=SHOT, frame=f, team=0,
                            detail=(("side", "right"),)))
    for i in range(12):
        ev.append(GameEvent(type=PASS, frame=20 + 30 * i, team=i % 2))
    ev.append(GameEvent(type="illegal_defender", frame=300, team=1,
                        detail=(("side", "left"),)))
    ev.append(GameEvent(type="fall", frame=50, team=0, actor=3))
    ev.append(GameEvent(type="fall", frame=60, team=1, actor=8))
    return ev


def test_scoreboard_scripted_counts():
    events = scripted_events()
    tally = PossessionTally(frames_team0=600, frames_team1=400)
    board = scoreboard(events, tally)
    t0, t1 = board.teams[0], board.teams[1]
    assert (t0.goals, t0.on_target, t0.attempts) == (2, 3, 5)
    assert t0.passes + t1.passes == 12
    assert t1.illegal_defender == 1
    assert (t0.falls, t1.falls) == (1, 1)
    assert t0.possession_pct == pytest.approx(60.0)
    assert t1.possession_pct == pytest.approx(40.0)


def test_scoreboard_equals_independent_fold():
    events = scripted_events()
    board = scoreboard(events)
    by_team = {0: {}, 1: {}}
    for e in events:
        if e.team is None:
            continue
        by_team[e.team][e.type] = by_team[e.team].get(e.type, 0) + 1
    for team in (0, 1):
        st = board.teams[team]
        assert st.goals == by_team[team].get(GOAL, 0)
        assert st.attempts == by_team[team].get(SHOT, 0)
        assert st.on_target == by_team[team].get(SHOT_ON_TARGET, 0)
        assert st.passes == by_team[team].get(PASS, 0)


def test_scoreboard_empty_events():
    board = scoreboard([], PossessionTally(frames_team0=10, frames_team1=10))
    assert board.teams[0].goals == 0
    assert board.teams[0].possession_pct == pytest.approx(50.0)


def test_goal_without_on_target_rejected():
    events = [GameEvent(type=GOAL, frame=0, team=0),
              GameEvent(type=SHOT, frame=0, team=0)]
    with pytest.raises(DataError):
        scoreboard(events)


def test_on_target_exceeding_attempts_rejected():
    events = [GameEvent(type=SHOT_ON_TARGET, frame=0, team=1)]
    with pytest.raises(DataError):
        scoreboard(events)


def test_unattributed_events_skipped():
    events = [GameEvent(type=PASS, frame=0)]
    board = scoreboard(events)
    assert board.teams[0].passes == 0 and board.teams[1].passes == 0


def test_scoreboard_json_and_table():
    board = scoreboard(scripted_events(),
                       PossessionTally(frames_team0=1, frames_team1=1))
    doc = board.to_dict()
    assert doc["0"]["goals"] == 2
    table = board.format_table()
    assert "possession %" in table
    assert "50.0" in table
