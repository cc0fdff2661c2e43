# Client/server over a real socket: same results as in-process.
# Run: python demos/07_remote_server.py

import threading

from fese import SchemeClient, SchemeFrameHandler, SchemeParams, scheme_keygen
from fese import perturb_bsc, random_template
from fese.pir import FrameServer, SocketChannel
from fese.rng import derive_rng

SEED = bytes(reversed(range(32)))

params = SchemeParams(
    template_bits=256, digest_bits=8, lsh_count=8, bloom_count=4,
    bucket_count=1024, bucket_capacity=12, match_threshold=32,
    near_radius=26, far_radius=77, tag_bits=20, group_name="toy61",
)
public, secret, state = scheme_keygen(params, SEED)

server = FrameServer(("127.0.0.1", 0), SchemeFrameHandler(state, derive_rng(SEED, "srv")))
host, port = server.server_address
thread = threading.Thread(target=server.serve_forever, daemon=True)
thread.start()
print(f"server listening on {host}:{port}")

channel = SocketChannel(host, port)
client = SchemeClient(secret, channel, derive_rng(SEED, "cli"))

rng = derive_rng(SEED, "templates")
reference = random_template(256, rng)
identifier = client.send(reference)
print(f"enrolled over the wire, identifier {identifier}")

probe = perturb_bsc(reference, 0.02, rng)
print(f"noisy retrieve over the wire -> {client.retrieve(probe)}")
print(f"payload fetch and decrypt    -> match: {client.fetch_template(identifier) == reference}")
print(f"bucket bytes transferred     -> {client.transferred_bytes}")

channel.close()
server.shutdown()
server.server_close()
print("server stopped")
