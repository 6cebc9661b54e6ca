"""Linear-chain CRF scoring, normalization, decoding, and marginals.

Scores live in log space.  The transition parameter is a single
(L+2) x (L+2) matrix over the label set plus two virtual states: row
``L`` is the START state (scores of opening with each label) and column
``L+1`` is the STOP state (scores of closing after each label).  Dynamic
programs run in float64 regardless of the incoming parameter dtype; all
reductions are max-subtracted log-sum-exp via torch.logsumexp.

Batched variants accept emissions of shape (B, N, L) where every
sentence in the batch shares length N, which keeps the recurrences free
of masking.
"""

from __future__ import annotations

import numpy as np
import torch


def start_stop_indices(num_labels: int) -> tuple[int, int]:
    """Indices of the virtual START and STOP states in the transition matrix."""
    return num_labels, num_labels + 1


def _split(transitions: torch.Tensor, num_labels: int):
    start_idx, stop_idx = start_stop_indices(num_labels)
    if transitions.shape != (num_labels + 2, num_labels + 2):
        raise ValueError(
            f"transitions shape {tuple(transitions.shape)}, expected "
            f"{(num_labels + 2, num_labels + 2)} for {num_labels} labels"
        )
    t64 = transitions.to(torch.float64)
    return t64[:num_labels, :num_labels], t64[start_idx, :num_labels], t64[:num_labels, stop_idx]


def path_score_batch(
    emissions: torch.Tensor, transitions: torch.Tensor, labels: torch.Tensor
) -> torch.Tensor:
    """Unnormalized log score of given paths; shapes (B,N,L), (B,N) -> (B,)."""
    if emissions.dim() != 3:
        raise ValueError("batched emissions must be (B, N, L)")
    if labels.shape != emissions.shape[:2]:
        raise ValueError("labels shape must match emissions batch and length")
    b, n, num_labels = emissions.shape
    trans, start, end = _split(transitions, num_labels)
    em = emissions.to(torch.float64)

    score = start[labels[:, 0]] + em[:, 0].gather(1, labels[:, 0:1]).squeeze(1)
    for t in range(1, n):
        score = (
            score
            + trans[labels[:, t - 1], labels[:, t]]
            + em[:, t].gather(1, labels[:, t : t + 1]).squeeze(1)
        )
    return score + end[labels[:, -1]]


def log_partition_batch(emissions: torch.Tensor, transitions: torch.Tensor) -> torch.Tensor:
    """Forward algorithm; log of the sum over all paths.  (B,N,L) -> (B,)."""
    if emissions.dim() != 3:
        raise ValueError("batched emissions must be (B, N, L)")
    _, n, num_labels = emissions.shape
    trans, start, end = _split(transitions, num_labels)
    em = emissions.to(torch.float64)

    alpha = start.unsqueeze(0) + em[:, 0]  # (B, L)
    for t in range(1, n):
        alpha = em[:, t] + torch.logsumexp(alpha.unsqueeze(2) + trans.unsqueeze(0), dim=1)
    return torch.logsumexp(alpha + end.unsqueeze(0), dim=1)


def crf_log_likelihood_batch(
    emissions: torch.Tensor, transitions: torch.Tensor, labels: torch.Tensor
) -> torch.Tensor:
    return path_score_batch(emissions, transitions, labels) - log_partition_batch(
        emissions, transitions
    )


def token_log_marginals_batch(
    emissions: torch.Tensor, transitions: torch.Tensor
) -> torch.Tensor:
    """Forward-backward per-token log posteriors.  (B,N,L) -> (B,N,L)."""
    if emissions.dim() != 3:
        raise ValueError("batched emissions must be (B, N, L)")
    _, n, num_labels = emissions.shape
    trans, start, end = _split(transitions, num_labels)
    em = emissions.to(torch.float64)

    alphas = [start.unsqueeze(0) + em[:, 0]]
    for t in range(1, n):
        alphas.append(
            em[:, t] + torch.logsumexp(alphas[-1].unsqueeze(2) + trans.unsqueeze(0), dim=1)
        )
    betas = [end.unsqueeze(0).expand_as(alphas[-1])]
    for t in range(n - 2, -1, -1):
        nxt = trans.unsqueeze(0) + (em[:, t + 1] + betas[0]).unsqueeze(1)
        betas.insert(0, torch.logsumexp(nxt, dim=2))

    log_z = torch.logsumexp(alphas[-1] + end.unsqueeze(0), dim=1)  # (B,)
    joint = torch.stack([a + b for a, b in zip(alphas, betas)], dim=1)  # (B, N, L)
    return joint - log_z.unsqueeze(1).unsqueeze(2)


def token_marginals_batch(emissions: torch.Tensor, transitions: torch.Tensor) -> torch.Tensor:
    """Forward-backward per-token label posteriors.  (B,N,L) -> (B,N,L)."""
    return torch.exp(token_log_marginals_batch(emissions, transitions))


def viterbi_decode_batch(emissions: torch.Tensor, transitions: torch.Tensor) -> np.ndarray:
    """Best path per sentence, shape (B, N) int64.

    Ties resolve to the path whose label ids are smallest when compared
    from the last position backwards; numpy argmax's documented
    first-occurrence rule supplies that choice at every step.
    """
    if emissions.dim() != 3:
        raise ValueError("batched emissions must be (B, N, L)")
    b, n, num_labels = emissions.shape
    trans_t, start_t, end_t = _split(transitions.detach(), num_labels)
    trans = trans_t.cpu().numpy()
    start = start_t.cpu().numpy()
    end = end_t.cpu().numpy()
    em = emissions.detach().to(torch.float64).cpu().numpy()

    score = start[None, :] + em[:, 0]  # (B, L)
    backptr = np.empty((b, n, num_labels), dtype=np.int64)
    for t in range(1, n):
        cand = score[:, :, None] + trans[None, :, :]  # (B, from, to)
        backptr[:, t] = cand.argmax(axis=1)
        score = np.take_along_axis(cand, backptr[:, t][:, None, :], axis=1)[:, 0] + em[:, t]

    best = np.empty((b, n), dtype=np.int64)
    best[:, -1] = (score + end[None, :]).argmax(axis=1)
    for t in range(n - 1, 0, -1):
        best[:, t - 1] = np.take_along_axis(backptr[:, t], best[:, t : t + 1], axis=1)[:, 0]
    return best


def path_score(emissions, transitions, labels) -> torch.Tensor:
    """Single-sentence wrapper; emissions (N, L), labels (N,)."""
    labels = torch.as_tensor(labels, dtype=torch.long)
    return path_score_batch(emissions.unsqueeze(0), transitions, labels.unsqueeze(0))[0]

def log_partition(emissions, transitions) -> torch.Tensor:
    return log_partition_batch(emissions.unsqueeze(0), transitions)[0]

def crf_log_likelihood(emissions, transitions, labels) -> torch.Tensor:
    """score(gold) - logZ; non-positive up to floating error."""
    return path_score(emissions, transitions, labels) - log_partition(emissions, transitions)

def token_marginals(emissions, transitions) -> torch.Tensor:
    return token_marginals_batch(emissions.unsqueeze(0), transitions)[0]

def viterbi_decode(emissions, transitions) -> list[int]:
    return viterbi_decode_batch(emissions.unsqueeze(0), transitions)[0].tolist()
