"""
Steering one summary to a word count
====================================

A controlled session against the deterministic simulator. The reflector
reports how many words have been written so far and asks for the next chunk,
halving the remaining budget until it is small enough for sentence-sized
steps.
"""

import json

from lengthctl import ControlConfig, run_session
from lengthctl.backend import SimulatedBackend, SimulatorProfile, synthetic_corpus

# a 2000-ish word filler document stands in for a real source text
source = synthetic_corpus(1, (2000, 2200), seed=4)[0]["text"]
print("source words:", len(source.split()))

# binary search toward 500 words, tolerance defaulting to max(10, 5%)
config = ControlConfig("binary", 500)
outcome = run_session(config, source, SimulatedBackend())
print(f"final words {outcome.final_words} after {outcome.rounds} rounds ({outcome.terminated_by})")

# every directive the reflector sent, with the model's reply length
for msg in outcome.transcript.messages[1:]:
    if msg.role == "user":
        print("  >", msg.content.split(".")[0])
    else:
        print("  <", len(json.loads(msg.content)["text"].split()), "words")

# the same request in sentence-sized steps takes one round per sentence
trivial = run_session(ControlConfig("multi", 500), source, SimulatedBackend())
print(f"trivial mode: {trivial.final_words} words in {trivial.rounds} rounds")

# a sloppier model: each reply misses its target by up to 25%
noisy = SimulatedBackend(SimulatorProfile(compliance="noisy", noise_fraction=0.25, seed=7))
rough = run_session(config, source, noisy)
print(f"noisy model: {rough.final_words} words in {rough.rounds} rounds, "
      f"deviation allowed {config.deviation}")
