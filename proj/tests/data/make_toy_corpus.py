"""Writes toy_corpus.jsonl and toy_corpus.txt (convai2 text layout) next to this file."""
import json
import os

PROFILES = [
    {
        "personas": ["i am a soccer player", "my number is 42", "i'm a goalie",
                     "nike cleats are my favorite", "i joined a new team last week"],
        "job": ["i am a soccer player , and you ?", "i am a goalie in the soccer team", "emm ... tell me yours first"],
        "fun": ["i like to buy nike cleats", "i just joined a new team"],
        "pets": ["no pets , just soccer", "i do not have any pets"],
        "live": ["near the soccer field", "i live in a small town"],
    },
    {
        "personas": ["i am a chef", "i love to cook pasta", "my kitchen is small", "i have a cat named max"],
        "job": ["i am a chef at a small place", "i cook pasta for a living"],
        "fun": ["i love to cook pasta at home", "i play with my cat"],
        "pets": ["i have a cat named max", "yes , a cat named max"],
        "live": ["in the city , my kitchen is small", "i live in the city"],
    },
    {
        "personas": ["i teach math", "i have two kids", "i live in ohio", "i drive a red car"],
        "job": ["i teach math at a school", "i am a teacher , i teach math"],
        "fun": ["i drive my red car around", "i play games with my two kids"],
        "pets": ["no , but i have two kids", "i do not have any pets"],
        "live": ["i live in ohio", "in ohio , with my two kids"],
    },
    {
        "personas": ["i play the guitar", "i am in a band", "my favorite color is blue", "i like jazz music"],
        "job": ["i play the guitar in a band", "i am in a band , and you ?"],
        "fun": ["i like jazz music", "i play the guitar every day"],
        "pets": ["no pets , just my guitar", "i do not have any pets"],
        "live": ["i live in a blue house", "in the city , near the band"],
    },
    {
        "personas": ["i am a nurse", "i work at a hospital", "i like to run", "i have a dog"],
        "job": ["i am a nurse at a hospital", "i work at a hospital"],
        "fun": ["i like to run with my dog", "i like to run in the park"],
        "pets": ["i have a dog", "yes , i have a dog , and you ?"],
        "live": ["near the hospital", "i live in a small town"],
    },
    {
        "personas": ["i am a student", "i study biology", "i like video games", "i live with my parents"],
        "job": ["i am a student , i study biology", "emm ... tell me yours first"],
        "fun": ["i like video games", "i play video games at night"],
        "pets": ["no , i live with my parents", "i do not have any pets"],
        "live": ["i live with my parents", "in the city , with my parents"],
    },
    {
        "personas": ["i grow corn", "i live on a farm", "i wake up early", "i have three horses"],
        "job": ["i grow corn on a farm", "i live on a farm , i grow corn"],
        "fun": ["i ride my three horses", "i wake up early and work"],
        "pets": ["i have three horses", "yes , three horses"],
        "live": ["i live on a farm", "on a farm , in a small town"],
    },
    {
        "personas": ["i paint the ocean", "i drink coffee every day", "i am from spain", "i love the beach"],
        "job": ["i paint the ocean", "i am a painter from spain"],
        "fun": ["i love the beach", "i drink coffee every day"],
        "pets": ["no pets , just coffee", "i do not have any pets"],
        "live": ["i am from spain , near the beach", "near the ocean"],
    },
]

QUESTIONS = {
    "job": "what do you do for a living ?",
    "fun": "what do you like to do for fun ?",
    "pets": "do you have any pets ?",
    "live": "where do you live ?",
}

# Each dialogue asks two questions; the response index rotates so identical
# contexts appear with different responses.
PLANS = [("job", "fun"), ("job", "pets"), ("live", "job"), ("pets", "live"), ("fun", "live"), ("job", "live")]


def dialogues():
    out = []
    for profile in PROFILES:
        for n, plan in enumerate(PLANS):
            turns = []
            for q in plan:
                opts = profile[q]
                turns.append({"user": QUESTIONS[q], "bot": opts[n % len(opts)]})
            out.append({"personas": profile["personas"], "turns": turns})
    return out


def main():
    here = os.path.dirname(os.path.abspath(__file__))
    ds = dialogues()
    with open(os.path.join(here, "toy_corpus.jsonl"), "w") as f:
        for d in ds:
            f.write(json.dumps(d) + "\n")
    with open(os.path.join(here, "toy_corpus.txt"), "w") as f:
        for d in ds:
            n = 1
            for p in d["personas"]:
                f.write(f"{n} your persona: {p}\n")
                n += 1
            for t in d["turns"]:
                f.write(f"{n} {t['user']}\t{t['bot']}\n")
                n += 1


if __name__ == "__main__":
    main()
