"""
Watching certainty rise at checkpoints
=======================================

A scripted reasoner answers after 30 tokens.  Before that point its probe
distributions are near-uniform, so confidence sits at zero; after it they are
one-hot and confidence snaps to 1.  The adaptive threshold drops as the trend
turns positive, and the suppression probability follows.
"""

from arsbench.backends import ReflectionLoop, ScriptedBackend, ScriptedReasonerSpec
from arsbench.difficulty import Query
from arsbench.engine import SuppressionConfig, generate_with_ars

solution = [f" step{i}" for i in range(30)] + [" Final", " answer:", " \\boxed{", "42", "}."]
spec = ScriptedReasonerSpec(
    instance_id="demo-certainty",
    solution_tokens=tuple(solution),
    loops=(ReflectionLoop(position=33, trigger_word=" Wait",
                          body_tokens=(" no", " recheck"), emit_prob=0.8),),
    gold_answer="42",
    answer_known_at=30,
)

cfg = SuppressionConfig(checkpoint_interval=8)
trace = generate_with_ars(Query(id="demo-certainty", text="What is 6 x 7?"),
                          ScriptedBackend(spec), cfg)

print(f"{'ckpt':>4} {'pos':>4} {'answer':>8} {'conf':>6} {'trend':>7} "
      f"{'tau':>5} {'p_supp':>6}")
for c in trace.checkpoints:
    print(f"{c.index:>4} {c.position:>4} {c.tentative_answer!r:>8} "
          f"{c.confidence:>6.3f} {c.trend:>7.3f} {c.threshold:>5.2f} "
          f"{c.suppression_prob:>6.3f}")

print()
print(f"emitted {trace.emitted_tokens} tokens"
      f" (+{trace.probe_tokens} probe tokens on the side branch)")
print(f"final answer: {trace.final_answer}")
print(f"suppressions fired: {len(trace.suppression_events)}")
