"""In-process stub of the inference sidecar wire protocol, for client tests.

Scores come from a wrapped reference scorer so remote and in-process paths
can be compared value-for-value. Failure injection knobs simulate transient
outages and protocol violations.
"""

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from polyprobe.scorer import ScoreRequest


class StubSidecar:
    def __init__(self, scorer, max_masks=None):
        self.scorer = scorer
        self.max_masks = max_masks
        self.calls = []          # POST /v1/score request bodies, in order
        self.fail_next = 0       # respond 503 this many times before succeeding
        self.bad_length_next = 0  # respond with a truncated scores array
        self.lock = threading.Lock()
        stub = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def _send(self, code, payload):
                body = json.dumps(payload).encode("utf-8")
                self.send_response(code)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def do_GET(self):
                if self.path == "/v1/health":
                    self._send(200, {"status": "ok"})
                elif self.path == "/v1/model":
                    self._send(200, {"model_name": "stub-model", "mask_token": "[MASK]",
                                     "max_masks": stub.max_masks or 16})
                else:
                    self._send(404, {"detail": "not found"})

            def do_POST(self):
                if self.path != "/v1/score":
                    self._send(404, {"detail": "not found"})
                    return
                length = int(self.headers.get("Content-Length", 0))
                body = json.loads(self.rfile.read(length))
                with stub.lock:
                    stub.calls.append(body)
                    if stub.fail_next > 0:
                        stub.fail_next -= 1
                        self._send(503, {"detail": "model not loaded"})
                        return
                    bad_length = stub.bad_length_next > 0
                    if bad_length:
                        stub.bad_length_next -= 1
                request = ScoreRequest(context=body["context"], candidates=tuple(body["candidates"]))
                response = stub.scorer.score_candidates(request)
                scores = list(response.scores)
                counts = list(response.token_counts)
                skipped = []
                if stub.max_masks is not None:
                    for i, c in enumerate(counts):
                        if c > stub.max_masks:
                            skipped.append(i)
                            scores[i] = 0.0
                if bad_length:
                    scores = scores[:-1]
                payload = {"scores": scores, "token_counts": counts}
                if skipped:
                    payload["skipped"] = skipped
                self._send(200, payload)

        self.server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)

    @property
    def url(self):
        host, port = self.server.server_address
        return f"http://{host}:{port}"

    def __enter__(self):
        self.thread.start()
        return self

    def __exit__(self, *exc):
        self.server.shutdown()
        self.server.server_close()
