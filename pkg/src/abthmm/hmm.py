"""Discrete hidden Markov model with estimator-style methods.

The class follows the fit/score/decode conventions used by estimator
libraries: hyperparameters live on the constructor, ``fit`` runs
Baum-Welch in place and returns ``self``, ``score`` is the forward
log-likelihood and ``decode``/``predict`` run Viterbi. Model files are
JSON with fields n_states, n_symbols, pi, a, b, labels and edge_labels,
written canonically so identical models produce identical bytes.
"""

import json
import math

import numpy as np

from .validation import check_observations, check_probability_vector, check_stochastic_matrix


class ImpossibleSequenceError(ValueError):
    """The observation sequence has probability zero under the model."""


class DiscreteHMM:
    """Hidden Markov model over a finite symbol alphabet.

    Parameters
    ----------
    startprob : array, shape (n_states,)
        Initial state distribution.
    transmat : array, shape (n_states, n_states)
        Row-stochastic transition matrix. Entries that are exactly zero are
        treated as structural and stay zero through fitting.
    emissionprob : array, shape (n_states, n_symbols)
        Row-stochastic emission matrix.
    max_iter : int
        Baum-Welch iteration cap.
    tol : float
        Stop fitting once the gain in total log-likelihood drops below this.
    updates : str
        Which parameter groups ``fit`` re-estimates: any of "s" (startprob),
        "t" (transmat), "e" (emissionprob).

    Attributes
    ----------
    history_ : list of float
        Total log-likelihood at the start of each completed iteration;
        non-decreasing.
    n_iter_ : int
        Iterations performed by the last ``fit``.
    converged_ : bool
        Whether the last ``fit`` stopped on tolerance rather than max_iter.
    """

    def __init__(self, startprob, transmat, emissionprob, *, max_iter=100,
                 tol=1e-4, updates="ste"):
        self.startprob = check_probability_vector(startprob, "startprob")
        self.transmat = check_stochastic_matrix(transmat, "transmat")
        self.emissionprob = check_stochastic_matrix(emissionprob, "emissionprob")
        n = self.startprob.shape[0]
        if self.transmat.shape != (n, n):
            raise ValueError(
                f"transmat shape {self.transmat.shape} does not match {n} states"
            )
        if self.emissionprob.shape[0] != n:
            raise ValueError(
                f"emissionprob has {self.emissionprob.shape[0]} rows for {n} states"
            )
        if set(updates) - set("ste"):
            raise ValueError(f"updates must only contain 's', 't', 'e': {updates!r}")
        self.max_iter = int(max_iter)
        self.tol = float(tol)
        self.updates = updates

    @property
    def n_states(self):
        return self.startprob.shape[0]

    @property
    def n_symbols(self):
        return self.emissionprob.shape[1]

    def get_params(self, deep=True):
        return {
            "startprob": self.startprob,
            "transmat": self.transmat,
            "emissionprob": self.emissionprob,
            "max_iter": self.max_iter,
            "tol": self.tol,
            "updates": self.updates,
        }

    def set_params(self, **params):
        current = self.get_params()
        for key in params:
            if key not in current:
                raise ValueError(f"unknown parameter {key!r}")
        current.update(params)
        self.__init__(
            current.pop("startprob"),
            current.pop("transmat"),
            current.pop("emissionprob"),
            **current,
        )
        return self

    def copy(self):
        return DiscreteHMM(
            self.startprob.copy(),
            self.transmat.copy(),
            self.emissionprob.copy(),
            max_iter=self.max_iter,
            tol=self.tol,
            updates=self.updates,
        )

    # ------------------------------------------------------------------
    # likelihood

    def score(self, obs):
        """Forward log-likelihood of one sequence, base e.

        Returns -inf when no state path supports the sequence.
        """
        obs = check_observations(obs, self.n_symbols)
        alpha = self.startprob * self.emissionprob[:, obs[0]]
        total = 0.0
        s = alpha.sum()
        if s == 0.0:
            return -math.inf
        total += math.log(s)
        alpha /= s
        for t in range(1, obs.shape[0]):
            alpha = (alpha @ self.transmat) * self.emissionprob[:, obs[t]]
            s = alpha.sum()
            if s == 0.0:
                return -math.inf
            total += math.log(s)
            alpha /= s
        return total

    def score_total(self, sequences, weights=None):
        """Summed log-likelihood over many sequences (fsum, deterministic)."""
        buckets, _ = _bucket(sequences, weights, self.n_symbols)
        parts = []
        for obs, w in buckets:
            logp, _, _ = _forward_batch(self, obs)
            parts.extend((w * logp).tolist())
        return math.fsum(parts)

    # ------------------------------------------------------------------
    # decoding

    def decode(self, obs):
        """Most likely state path (Viterbi).

        Returns
        -------
        logprob : float
            Log-likelihood of the best path.
        states : ndarray
            The path itself; ties are broken toward the lower state index.
        """
        obs = check_observations(obs, self.n_symbols)
        with np.errstate(divide="ignore"):
            log_a = np.log(self.transmat)
            log_b = np.log(self.emissionprob)
            log_pi = np.log(self.startprob)
        t_len = obs.shape[0]
        delta = log_pi + log_b[:, obs[0]]
        back = np.zeros((t_len, self.n_states), dtype=np.int64)
        for t in range(1, t_len):
            cand = delta[:, None] + log_a
            back[t] = np.argmax(cand, axis=0)
            delta = cand[back[t], np.arange(self.n_states)] + log_b[:, obs[t]]
            if np.all(np.isinf(delta)):
                raise ImpossibleSequenceError(
                    f"sequence impossible under the model at step {t}"
                )
        if np.all(np.isinf(delta)):
            raise ImpossibleSequenceError("sequence impossible under the model")
        states = np.zeros(t_len, dtype=np.int64)
        states[-1] = int(np.argmax(delta))
        for t in range(t_len - 1, 0, -1):
            states[t - 1] = back[t, states[t]]
        return float(delta[states[-1]]), states

    def predict(self, obs):
        """Viterbi state path without the score."""
        return self.decode(obs)[1]

    # ------------------------------------------------------------------
    # sampling

    def sample(self, rng=None, absorbing=None, max_steps=10_000):
        """Draw one (states, observations) pair.

        The walk starts from startprob, emits in every visited state, and
        stops right after emitting once in an absorbing state. When
        ``absorbing`` is None the states with a unit self-loop are used.
        """
        rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
        if absorbing is None:
            absorbing = {i for i in range(self.n_states) if self.transmat[i, i] == 1.0}
        else:
            absorbing = set(int(i) for i in absorbing)
        if not absorbing:
            raise ValueError("model has no absorbing states; pass them explicitly")
        emit_cdf = np.cumsum(self.emissionprob, axis=1)
        trans_cdf = np.cumsum(self.transmat, axis=1)
        start_cdf = np.cumsum(self.startprob)
        states = []
        obs = []
        state = _draw(start_cdf, rng)
        for _ in range(max_steps):
            states.append(state)
            obs.append(_draw(emit_cdf[state], rng))
            if state in absorbing:
                return np.asarray(states, dtype=np.int64), np.asarray(obs, dtype=np.int64)
            state = _draw(trans_cdf[state], rng)
        raise RuntimeError(f"no absorbing state reached within {max_steps} steps")

    # ------------------------------------------------------------------
    # fitting

    def fit(self, sequences, weights=None):
        """Baum-Welch over a collection of sequences.

        Identical sequences are merged into weighted ones first, which
        changes nothing about the result but a lot about the run time.
        Structural zeros of transmat are preserved exactly. Sets history_,
        n_iter_ and converged_.
        """
        buckets, total_w = _bucket(sequences, weights, self.n_symbols)
        if total_w <= 0:
            raise ValueError("no sequences to fit")
        self.history_ = []
        self.converged_ = False
        for _ in range(self.max_iter):
            logp, a_num, a_den, b_num, b_den, pi_num = self._expectation(buckets)
            self.history_.append(logp)
            if len(self.history_) > 1 and logp - self.history_[-2] < self.tol:
                self.converged_ = True
                break
            if "s" in self.updates:
                self.startprob = pi_num / pi_num.sum()
            if "t" in self.updates:
                rows = a_den > 0
                new_a = self.transmat.copy()
                new_a[rows] = a_num[rows] / a_den[rows, None]
                self.transmat = new_a
            if "e" in self.updates:
                rows = b_den > 0
                new_b = self.emissionprob.copy()
                new_b[rows] = b_num[rows] / b_den[rows, None]
                self.emissionprob = new_b
        self.n_iter_ = len(self.history_)
        return self

    def _expectation(self, buckets):
        n, j = self.n_states, self.n_symbols
        a_num = np.zeros((n, n))
        a_den = np.zeros(n)
        b_num = np.zeros((n, j))
        b_den = np.zeros(n)
        pi_num = np.zeros(n)
        log_parts = []
        for obs, w in buckets:
            logp, alpha, scale = _forward_batch(self, obs)
            if not np.all(np.isfinite(logp)):
                raise ImpossibleSequenceError(
                    "a training sequence has zero probability under the model"
                )
            log_parts.extend((w * logp).tolist())
            beta = self._backward_batch(obs, scale)
            gamma = alpha * beta  # (B, T, N), rows already sum to one
            wg = w[:, None, None] * gamma
            pi_num += wg[:, 0, :].sum(axis=0)
            t_len = obs.shape[1]
            for t in range(t_len):
                np.add.at(b_num.T, obs[:, t], wg[:, t, :])
            b_den += wg.sum(axis=(0, 1))
            if t_len > 1:
                a_den += wg[:, :-1, :].sum(axis=(0, 1))
                bb = self.emissionprob[:, obs[:, 1:]]  # (N, B, T-1)
                bb = np.moveaxis(bb, 0, 2) * beta[:, 1:, :] / scale[:, 1:, None]
                xi = np.einsum("bti,ij,btj->ij", w[:, None, None] * alpha[:, :-1, :],
                               self.transmat, bb)
                a_num += xi
        return math.fsum(log_parts), a_num, a_den, b_num, b_den, pi_num

    def _backward_batch(self, obs, scale):
        b_count, t_len = obs.shape
        beta = np.ones((b_count, t_len, self.n_states))
        for t in range(t_len - 2, -1, -1):
            nxt = self.emissionprob[:, obs[:, t + 1]].T * beta[:, t + 1, :]
            beta[:, t, :] = (nxt @ self.transmat.T) / scale[:, t + 1, None]
        return beta


def _draw(cdf, rng):
    """Index into a cumulative row; clamped so float shortfall in the last
    cell cannot return an out-of-range index."""
    return min(int(np.searchsorted(cdf, rng.random(), side="right")), cdf.shape[0] - 1)


def _forward_batch(model, obs):
    """Scaled forward pass over a batch of equal-length sequences.

    Returns per-sequence log-likelihood, the scaled alphas and the scale
    factors. A scale of zero marks an impossible sequence; its log-likelihood
    comes back as -inf.
    """
    b_count, t_len = obs.shape
    alpha = np.zeros((b_count, t_len, model.n_states))
    scale = np.zeros((b_count, t_len))
    alpha[:, 0, :] = model.startprob[None, :] * model.emissionprob[:, obs[:, 0]].T
    scale[:, 0] = alpha[:, 0, :].sum(axis=1)
    ok = scale[:, 0] > 0
    alpha[ok, 0, :] /= scale[ok, 0, None]
    for t in range(1, t_len):
        alpha[:, t, :] = (alpha[:, t - 1, :] @ model.transmat) * model.emissionprob[:, obs[:, t]].T
        scale[:, t] = alpha[:, t, :].sum(axis=1)
        ok = scale[:, t] > 0
        alpha[ok, t, :] /= scale[ok, t, None]
    with np.errstate(divide="ignore"):
        logp = np.where(np.all(scale > 0, axis=1), np.log(np.maximum(scale, 1e-320)).sum(axis=1), -np.inf)
    return logp, alpha, scale


def _bucket(sequences, weights, n_symbols):
    """Merge duplicate sequences and group by length.

    Returns a list of (obs_matrix, weight_vector) pairs and the total weight.
    """
    if weights is None:
        weights = [1.0] * len(sequences)
    if len(weights) != len(sequences):
        raise ValueError("weights length does not match sequences")
    merged = {}
    for seq, w in zip(sequences, weights):
        key = tuple(int(x) for x in check_observations(seq, n_symbols))
        merged[key] = merged.get(key, 0.0) + float(w)
    by_len = {}
    for key, w in merged.items():
        by_len.setdefault(len(key), ([], []))
        by_len[len(key)][0].append(key)
        by_len[len(key)][1].append(w)
    buckets = []
    for t_len in sorted(by_len):
        seqs, ws = by_len[t_len]
        buckets.append((np.asarray(seqs, dtype=np.int64), np.asarray(ws)))
    total = math.fsum(float(ws.sum()) for _, ws in buckets)
    return buckets, total


# ----------------------------------------------------------------------
# model files


def save_hmm(model, path, labels=None, edge_labels=None):
    """Write a model file. Key order and float text are canonical, so equal
    models give byte-identical files."""
    doc = {
        "n_states": model.n_states,
        "n_symbols": model.n_symbols,
        "pi": model.startprob.tolist(),
        "a": model.transmat.tolist(),
        "b": model.emissionprob.tolist(),
        "labels": list(labels) if labels is not None else None,
        "edge_labels": list(edge_labels) if edge_labels is not None else None,
    }
    text = json.dumps(doc, sort_keys=True, indent=1)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text + "\n")


def load_hmm(path):
    """Read a model file back as (model, labels, edge_labels)."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    for key in ("n_states", "n_symbols", "pi", "a", "b"):
        if key not in doc:
            raise ValueError(f"model file is missing field {key!r}")
    model = DiscreteHMM(doc["pi"], doc["a"], doc["b"])
    if model.n_states != doc["n_states"] or model.n_symbols != doc["n_symbols"]:
        raise ValueError("model file header does not match matrix shapes")
    labels = doc.get("labels")
    edge_labels = doc.get("edge_labels")
    if labels is not None:
        if len(labels) != model.n_states:
            raise ValueError("labels length does not match n_states")
        labels = tuple(labels)
    if edge_labels is not None:
        if len(edge_labels) != model.n_states:
            raise ValueError("edge_labels length does not match n_states")
        edge_labels = tuple(edge_labels)
    return model, labels, edge_labels
