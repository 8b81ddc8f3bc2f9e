"""Writes the toy corpora in this directory. Deterministic: rerunning
reproduces the committed files byte for byte."""
import json
import random

rng = random.Random(7)
subjects = ["the council", "a local team", "the river", "our engineers", "the new library", "farmers",
            "the museum", "a small startup", "the school board", "volunteers"]
verbs = ["approved", "opened", "flooded", "repaired", "expanded", "harvested", "restored", "launched",
         "debated", "cleaned"]
objects = ["the old bridge", "a park", "the north road", "the water plant", "a reading room", "early wheat",
           "a painting", "an app", "the budget", "the beach"]
tails = ["on monday", "after a long delay", "with public support", "despite the rain", "ahead of schedule",
         "for the first time", "this spring", "with help from students"]


def sentence():
    return f"{rng.choice(subjects)} {rng.choice(verbs)} {rng.choice(objects)} {rng.choice(tails)} ."


with open("toy_flat.jsonl", "w") as f:
    for i in range(40):
        sents = [sentence() for _ in range(rng.randint(3, 6))]
        f.write(json.dumps({"id": f"doc{i:02d}", "document": " ".join(sents), "summary": sents[0]}) + "\n")

with open("toy_threads.jsonl", "w") as f:
    for i in range(30):
        answers = []
        for _ in range(rng.randint(2, 4)):
            answers.append({"text": " ".join(sentence() for _ in range(rng.randint(1, 3))),
                            "upvotes": rng.randint(0, 50)})
        top = max(range(len(answers)), key=lambda k: (answers[k]["upvotes"], -k))
        summary = answers[top]["text"].split(" . ")[0].rstrip(" .") + " ."
        f.write(json.dumps({"id": f"q{i:02d}", "question": "what happened in town ?", "answers": answers,
                            "summary": summary}) + "\n")
