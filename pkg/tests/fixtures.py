"""Hand-computed metric fixtures.

Every window starts at t=0 with 160 ms frames (T=125). Values were worked
out by counting frames by hand:

fixture_a
  cue 1: gt [0, 3200)    pred [0, 3200)      frames match 125/125, IoU 1
  cue 2: gt [1600, 4800) pred [3200, 6400)   20 frames differ -> 105/125, IoU 1/3
  cue 3: gt [0, 8000)    pred empty          50 frames differ -> 75/125, miss
  frame-acc = (1 + 0.84 + 0.6) / 3
  F1@.10 = F1@.25: P = 2/2, R = 2/3 -> 0.8 ; F1@.50: P = 1/2, R = 1/3 -> 0.4

fixture_b
  two cues, gt [0, 1600), pred [16000, 17600): 20 frames differ -> 0.84 each, no hits

fixture_c
  cues 1-2: gt [0, 1000) pred [0, 300)       7 vs 2 frames -> 120/125, IoU 0.3
  cues 3-4: gt [5000, 6000) pred [7000, 8000) 7 + 7 frames differ -> 111/125, IoU 0
  frame-acc = (0.96 * 2 + 0.888 * 2) / 4 ; F1@.10 = F1@.25 = 0.5 ; F1@.50 = 0
"""

from subalign.subtitles import Interval

FIXTURES = {
    "a": dict(
        gt=[Interval(0, 3200), Interval(1600, 4800), Interval(0, 8000)],
        pred=[Interval(0, 3200), Interval(3200, 6400), Interval.empty(0)],
        frame_acc=(1 + 105 / 125 + 75 / 125) / 3,
        f1={0.10: 0.8, 0.25: 0.8, 0.50: 0.4},
    ),
    "b": dict(
        gt=[Interval(0, 1600), Interval(0, 1600)],
        pred=[Interval(16000, 17600), Interval(16000, 17600)],
        frame_acc=105 / 125,
        f1={0.10: 0.0, 0.25: 0.0, 0.50: 0.0},
    ),
    "c": dict(
        gt=[Interval(0, 1000), Interval(0, 1000), Interval(5000, 6000), Interval(5000, 6000)],
        pred=[Interval(0, 300), Interval(0, 300), Interval(7000, 8000), Interval(7000, 8000)],
        frame_acc=(2 * 120 / 125 + 2 * 111 / 125) / 4,
        f1={0.10: 0.5, 0.25: 0.5, 0.50: 0.0},
    ),
}
