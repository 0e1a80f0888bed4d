import numpy as np
import pytest

from gaze2class import CohortSpec, Diagnosis, FixationPoint, GazeRecording, generate_cohort


def make_recording(points_xy, screen=(64, 64), label=Diagnosis.ASD, durations=None,
                   subject="s0", stimulus="t0"):
    """Recording with fixations at given (x, y) positions and synthetic timing."""
    pts = []
    t = 0.0
    for i, (x, y) in enumerate(points_xy):
        dur = 200.0 if durations is None else float(durations[i])
        pts.append(FixationPoint(float(x), float(y), t, dur))
        t += dur + 50.0
    return GazeRecording(
        subject_id=subject,
        stimulus_id=stimulus,
        label=label,
        screen_width=screen[0],
        screen_height=screen[1],
        points=pts,
    )


def random_recording(rng, n_points, screen=(64, 64), label=Diagnosis.ASD, subject="s0"):
    xy = np.column_stack(
        [rng.uniform(0, screen[0], n_points), rng.uniform(0, screen[1], n_points)]
    )
    durations = rng.uniform(100, 400, n_points)
    return make_recording(xy, screen=screen, label=label, durations=durations, subject=subject)


@pytest.fixture
def small_cohort():
    return generate_cohort(CohortSpec(n_per_class=6, seed=123))
