"""Three-party corpus audit protocol: a Prover, an enclave-emulated Auditor
and a Verifier that only ever learns four-token verdicts."""

__version__ = "0.1.0"
