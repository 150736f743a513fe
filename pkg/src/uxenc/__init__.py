"""uxenc: multi-channel multi-talker speech simulation, a masked-prediction
cross-channel/cross-frame encoder with bi-label contrastive pretraining, and
diarization / CTC-ASR probes with WER/DER scoring."""

__version__ = "0.1.0"
