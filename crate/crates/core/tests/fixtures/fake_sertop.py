#!/usr/bin/env python3
"""Tiny stand-in for sertop: enough protocol to drive one known proof."""
import re
import sys

doc = {}  # sid -> sentence text
order = []
next_sid = 1
executed = set()


def out(line):
    sys.stdout.write(line + "\n")
    sys.stdout.flush()


def goals(upto):
    sentences = [doc[s] for s in order if s <= upto and s in executed]
    if not any(s.startswith("Theorem") for s in sentences):
        return None
    printing_all = "Set Printing All." in sentences
    steps = [s for s in sentences if not s.startswith(("Theorem", "Require", "Set"))]
    if steps == []:
        text = "  ============================\n  forall n : nat, 0 + n = n"
    elif steps == ["intros n."]:
        text = "  n : nat\n  ============================\n  0 + n = n"
    elif steps == ["intros n.", "simpl."]:
        text = "  n : nat\n  ============================\n  n = n"
    else:
        return ""
    if printing_all:
        text = text.replace("0 + n = n", "@eq nat (Nat.add O n) n").replace("n = n", "@eq nat n n")
    return text


VALID = {"intros n.", "simpl.", "reflexivity.", "Set Printing All."}

for line in sys.stdin:
    m = re.match(r"\((\S+) (.*)\)\s*$", line.strip())
    if not m:
        continue
    tag, cmd = m.groups()
    out(f"(Answer {tag} Ack)")
    if cmd.startswith("(Add"):
        text = re.search(r'"(.*)"', cmd).group(1).replace('\\"', '"')
        sid = next_sid
        next_sid += 1
        doc[sid] = text
        order.append(sid)
        out(f"(Answer {tag} (Added {sid} ((fname ToplevelInput)) NewTip))")
    elif cmd.startswith("(Exec"):
        sid = int(re.search(r"\d+", cmd).group(0))
        text = doc[sid]
        steps = [doc[s] for s in order if s in executed and not doc[s].startswith(("Theorem", "Require", "Set"))]
        ok = text.startswith(("Theorem", "Require")) or text in VALID
        if text == "reflexivity." and steps != ["intros n.", "simpl."]:
            ok = False
        if text == "crash.":
            sys.exit(3)
        if ok:
            executed.add(sid)
        else:
            out(f'(Answer {tag} (CoqExn ((loc ()) (str "Error: cannot apply {text}"))))')
    elif cmd.startswith("(Cancel"):
        sid = int(re.search(r"\d+", cmd).group(0))
        dropped = [s for s in order if s >= sid]
        for s in dropped:
            order.remove(s)
            executed.discard(s)
        out(f"(Answer {tag} (Canceled ({' '.join(map(str, dropped))})))")
    elif "Goals" in cmd:
        sid = int(re.search(r"sid (\d+)", cmd).group(1))
        g = goals(sid)
        if g:
            esc = g.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n")
            out(f'(Answer {tag} (ObjList ((CoqString "{esc}"))))')
        else:
            out(f"(Answer {tag} (ObjList ()))")
    out(f"(Answer {tag} Completed)")
