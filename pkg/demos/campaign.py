"""Small end-to-end campaign from a JSON config, then a resume.

The second run finds every stage up to date and rewrites only the
manifest.  Equivalent to ``ringdeph campaign --config smoke_campaign.json``.
"""
import sys
import tempfile
from pathlib import Path

from ringdeph import CampaignConfig, run_campaign

cfg = CampaignConfig.load(Path(__file__).with_name("smoke_campaign.json"))
out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="ringdeph-"))

man = run_campaign(cfg, out, progress=print)
print(f"status {man.status}, {len(man.files)} files in {out}")
print((out / "tables" / "tests.csv").read_text())
print((out / "tables" / "orthogonal.csv").read_text())

again = run_campaign(cfg, out, progress=lambda m: None)
print("resume:", sorted(set(again.stages.values())), "identical files:", again.files == man.files)
