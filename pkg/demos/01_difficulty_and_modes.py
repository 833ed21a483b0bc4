"""
Scoring question difficulty and picking a reasoning mode
=========================================================

Three questions of increasing hairiness, pushed through the difficulty
heuristic and the mode schedule.  Run with ``python3 demos/01_difficulty_and_modes.py``.
"""

from arsbench.difficulty import Query, build_prompt, heuristic_difficulty, schedule_mode

QUESTIONS = [
    "What is 7 + 5?",
    "A train leaves at 3pm going 60 mph. Another leaves at 4pm going 80 mph "
    "from the same station. When does the second train catch the first?",
    "Prove that for every integer n >= 1 the sum 1 + 2 + ... + n equals "
    "n(n+1)/2, then compute the remainder of that sum modulo 7 for n = 100. "
    "Show the derivation and verify the limit of the ratio as n grows.",
]

for i, text in enumerate(QUESTIONS):
    query = Query(id=f"demo-{i}", text=text)
    score = heuristic_difficulty(query)
    mode = schedule_mode(score.value)
    print(f"question {i}: {text[:60]}...")
    print(f"  difficulty = {score.value:.3f}"
          f"  (length {score.length_term:.3f}"
          f" + keywords {score.keyword_term:.3f}"
          f" + symbols {score.symbol_term:.3f})")
    print(f"  mode = {mode.tag.value}  params = {mode.params}")
    print()

# the prompt the controller would actually send for the hardest one
query = Query(id="demo-2", text=QUESTIONS[2])
mode = schedule_mode(heuristic_difficulty(query).value)
print("prompt for the hardest question:")
print("-" * 40)
print(build_prompt(mode, query))
