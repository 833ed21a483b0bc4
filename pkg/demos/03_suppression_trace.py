"""
One decode, with and without trigger suppression
=================================================

The scripted reasoner below keeps offering " Wait" at token 12 long after
the answer is known.  Vanilla decoding takes the bait over and over; the
adaptive controller resamples the trigger away once its certainty gate is
hot, so the loop never fires.
"""

from arsbench.backends import ReflectionLoop, ScriptedBackend, ScriptedReasonerSpec
from arsbench.difficulty import Query
from arsbench.engine import SuppressionConfig, generate_with_ars
from arsbench.harness import BaselineConfig, BaselineKind, run_baseline

words = " so the product of the primes 2 and 3 is 6 and".split()
solution = tuple(" " + w for w in words) + (" Final", " answer:", " \\boxed{", "6", "}.")
spec = ScriptedReasonerSpec(
    instance_id="demo-suppression",
    solution_tokens=solution,
    answer_known_at=4,
    gold_answer="6",
    loops=(ReflectionLoop(position=12, trigger_word=" Wait",
                          body_tokens=(" maybe", " recount", " them"),
                          emit_prob=0.75),),
)
query = Query(id="demo-suppression", text="What is 2 x 3?")
# seed 3 happens to bait the vanilla decoder four times in a row
cfg = SuppressionConfig(checkpoint_interval=4, rng_seed=3)

vanilla = run_baseline(query, ScriptedBackend(spec),
                       BaselineConfig(BaselineKind.VANILLA), cfg)
ars = generate_with_ars(query, ScriptedBackend(spec), cfg)

print(f"vanilla ({vanilla.emitted_tokens} tokens):")
print(" ", vanilla.text.replace("\n", "\\n"))
print()
print(f"ars ({ars.emitted_tokens} tokens):")
print(" ", ars.text.replace("\n", "\\n"))
print()
for event in ars.suppression_events:
    print(f"suppressed {event.suppressed_token!r} at position {event.position}"
          f" -> {event.replacement_token!r}"
          f"  (p={event.suppression_prob:.2f}, draw={event.random_draw:.3f})")
print()
print(f"both answers: vanilla={vanilla.final_answer!r} ars={ars.final_answer!r}")
