"""Frames and timelines: how a node's history is cut up before the model sees it."""

from ftm import TemporalGraph, build_timeline, extract_frame

# node 0 talks to 1, 2, 3 at times 1..9
src = [0, 0, 0, 0, 0, 0, 0, 0, 0]
dst = [1, 2, 3, 1, 2, 3, 1, 2, 3]
ts = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]
g = TemporalGraph(src, dst, ts)

# the newest frame: k most recent links strictly before t
f = extract_frame(g, 0, 8.0, k=4)
print("frame before t=8:", [(e.neighbor, e.timestamp) for e in f.entries], "ref_time", f.ref_time)

# frames overlap by half; each older frame starts k/2 links further back
tl = build_timeline(g, 0, 10.0, k=4, n=3)
for i, fr in enumerate(tl.frames):
    print(f"frame {i} (ref {fr.ref_time}):", [e.timestamp for e in fr.entries])

# with little history the leading slots are empty and become zeros in the model
short = build_timeline(g, 0, 3.5, k=4, n=3)
print("valid frames at t=3.5:", short.valid_count, "of", short.target_length)
print([None if s is None else len(s) for s in short.slots()])
