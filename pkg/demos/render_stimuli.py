"""Render one search array per psychophysical condition.

Writes a PNG for each condition in the catalog at a representative
contrast level, plus the target mask next to it, into demo_out/stimuli.
"""

from pathlib import Path

from v1sal import stimgen

out = Path("demo_out/stimuli")
out.mkdir(parents=True, exist_ok=True)

for cond in stimgen.condition_catalog():
    # pick a level around two thirds up the ladder so the singleton shows
    level = cond.levels[(2 * len(cond.levels)) // 3]
    stim = stimgen.build_stimulus(cond.spec(level, seed=7))
    paths = stimgen.save_stimulus(stim, out, name=f"{cond.name}_l{level:g}")
    print(f"{cond.name:28s} level {level:<6g} -> {paths['image']}")

print(f"\n{len(stimgen.condition_catalog())} conditions written under {out}/")
