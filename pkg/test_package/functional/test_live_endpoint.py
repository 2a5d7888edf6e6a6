import os

import pytest

from doc2eg.config import RunConfig, build_gateway
from doc2eg.document import DocumentRecord
from doc2eg.pipeline import CascadePipeline, PipelineConfig
from test_package.utils import TEMPORAL

LIVE_ENDPOINT = os.environ.get("DOC2EG_LIVE_ENDPOINT")

pytestmark = [
    pytest.mark.live,
    pytest.mark.skipif(not LIVE_ENDPOINT, reason="DOC2EG_LIVE_ENDPOINT is not set"),
]


def test_one_document_against_a_real_model(script_loc):
    with open(str(script_loc.join("article.txt")), encoding="utf-8") as article:
        document = DocumentRecord("bc-budget", article.read())
    config = RunConfig.load(
        overrides={
            "provider.endpoint": LIVE_ENDPOINT,
            "provider.model": os.environ.get("DOC2EG_LIVE_MODEL", "default"),
        }
    )
    pipeline = CascadePipeline(
        build_gateway(config, embedder=False),
        PipelineConfig(max_rounds=2, relations=[TEMPORAL]),
    )

    bundle, trace = pipeline.run_document(document)

    assert bundle.events
    assert trace.rounds_used()["temporal"] in (1, 2)
