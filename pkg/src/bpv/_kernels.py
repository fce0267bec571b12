"""Numba kernels for training and inference.

All kernels run with nogil=True so the trainer can shard documents
across plain Python threads that update shared parameter arrays without
locks. Lost updates between workers are tolerated; bit-level
reproducibility holds at workers=1.

Randomness comes from a splitmix64 stream seeded per document, so the
draws for one document never depend on batching, worker count, or the
progress of other documents.
"""

import numpy as np
from numba import njit

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX_A = np.uint64(0xBF58476D1CE4E5B9)
_MIX_B = np.uint64(0x94D049BB133111EB)
_INV_2_53 = 1.0 / 9007199254740992.0


@njit(cache=True, nogil=True)
def mix64(z):
    """splitmix64 finalizer; also used to derive salts and seeds."""
    z = (z ^ (z >> np.uint64(30))) * _MIX_A
    z = (z ^ (z >> np.uint64(27))) * _MIX_B
    return z ^ (z >> np.uint64(31))


@njit(cache=True, nogil=True)
def _rng_uniform(state):
    """Advance the stream; return (uniform in [0, 1), new state)."""
    state = state + _GOLDEN
    bits = mix64(state)
    return (bits >> np.uint64(11)) * _INV_2_53, state


@njit(cache=True, nogil=True)
def _alias_draw(alias_prob, alias_idx, state):
    """One draw from a Walker alias table."""
    u1, state = _rng_uniform(state)
    u2, state = _rng_uniform(state)
    n = alias_prob.shape[0]
    j = int(u1 * n)
    if j >= n:
        j = n - 1
    if u2 < alias_prob[j]:
        return j, state
    return alias_idx[j], state


@njit(cache=True, nogil=True)
def _dbow_doc(
    v,
    acc_v,
    proj,
    acc_proj,
    weights,
    bias,
    acc_w,
    acc_b,
    terms,
    start,
    end,
    alias_prob,
    alias_idx,
    proposal_q,
    n_samples,
    lr,
    eps,
    dropout_p,
    has_proj,
    use_sigmoid,
    update_shared,
    state,
    mask,
    x,
    u_buf,
    s_buf,
    code,
    cand,
    corr,
    logits,
    g,
    uid,
    ug,
    grad_code,
    gs,
    gx,
):
    """Process every position of one document; returns (loss_sum, positions, state).

    Update order per position: softmax rows and bias, then the projection,
    then the document vector, all from gradients taken against the
    pre-update parameter values.
    """
    d = v.shape[0]
    k = code.shape[0]
    vocab = weights.shape[0]
    inv_keep = 1.0 / (1.0 - dropout_p) if dropout_p > 0.0 else 1.0
    loss_sum = 0.0
    n_pos = 0
    for t in range(start, end):
        target = terms[t]
        # inverted dropout on the embedding-layer input
        for i in range(d):
            if dropout_p > 0.0:
                uu, state = _rng_uniform(state)
                mask[i] = 0.0 if uu < dropout_p else inv_keep
            else:
                mask[i] = 1.0
            x[i] = v[i] * mask[i]
        if has_proj:
            for i in range(k):
                acc = 0.0
                for j in range(d):
                    acc += x[j] * proj[j, i]
                u_buf[i] = acc
        else:
            for i in range(k):
                u_buf[i] = x[i]
        if use_sigmoid:
            for i in range(k):
                z = u_buf[i]
                if z >= 0.0:
                    s_buf[i] = 1.0 / (1.0 + np.exp(-z))
                    code[i] = 1.0
                else:
                    ez = np.exp(z)
                    s_buf[i] = ez / (1.0 + ez)
                    code[i] = 0.0
        else:
            for i in range(k):
                code[i] = u_buf[i]
        # candidate set, target first
        if n_samples > 0:
            n_cand = n_samples + 1
            cand[0] = target
            corr[0] = 0.0
            for j in range(1, n_cand):
                while True:
                    sid, state = _alias_draw(alias_prob, alias_idx, state)
                    if sid != target:
                        break
                cand[j] = sid
                corr[j] = np.log(n_samples * proposal_q[sid])
        else:
            n_cand = vocab
            cand[0] = target
            idx = 1
            for r in range(vocab):
                if r != target:
                    cand[idx] = r
                    idx += 1
            for j in range(n_cand):
                corr[j] = 0.0
        # restricted softmax over the candidates
        mx = -1.0e300
        for j in range(n_cand):
            r = cand[j]
            z = bias[r] - corr[j]
            for i in range(k):
                z += weights[r, i] * code[i]
            logits[j] = z
            if z > mx:
                mx = z
        zsum = 0.0
        for j in range(n_cand):
            e = np.exp(logits[j] - mx)
            g[j] = e
            zsum += e
        loss_sum += np.log(zsum) + mx - logits[0]
        n_pos += 1
        for j in range(n_cand):
            g[j] = g[j] / zsum
        g[0] -= 1.0
        # gradient w.r.t. the code, taken against pre-update weights
        for i in range(k):
            acc = 0.0
            for j in range(n_cand):
                acc += g[j] * weights[cand[j], i]
            grad_code[i] = acc
        if update_shared:
            # merge duplicate sampled rows so each row gets one AdaGrad step
            n_u = 0
            for j in range(n_cand):
                r = cand[j]
                found = -1
                for q in range(n_u):
                    if uid[q] == r:
                        found = q
                        break
                if found >= 0:
                    ug[found] += g[j]
                else:
                    uid[n_u] = r
                    ug[n_u] = g[j]
                    n_u += 1
            for q in range(n_u):
                r = uid[q]
                gamma = ug[q]
                for i in range(k):
                    gr = gamma * code[i]
                    if gr != 0.0:
                        acc_w[r, i] += gr * gr
                        weights[r, i] -= lr * gr / (eps + np.sqrt(acc_w[r, i]))
                acc_b[r] += gamma * gamma
                bias[r] -= lr * gamma / (eps + np.sqrt(acc_b[r]))
        if use_sigmoid:
            for i in range(k):
                gs[i] = grad_code[i] * s_buf[i] * (1.0 - s_buf[i])
        else:
            for i in range(k):
                gs[i] = grad_code[i]
        if has_proj:
            for j in range(d):
                acc = 0.0
                for i in range(k):
                    acc += proj[j, i] * gs[i]
                gx[j] = acc
            if update_shared:
                for j in range(d):
                    xj = x[j]
                    if xj != 0.0:
                        for i in range(k):
                            gp = xj * gs[i]
                            acc_proj[j, i] += gp * gp
                            proj[j, i] -= lr * gp / (eps + np.sqrt(acc_proj[j, i]))
            for j in range(d):
                gv = gx[j] * mask[j]
                if gv != 0.0:
                    acc_v[j] += gv * gv
                    v[j] -= lr * gv / (eps + np.sqrt(acc_v[j]))
        else:
            for i in range(d):
                gv = gs[i] * mask[i]
                if gv != 0.0:
                    acc_v[i] += gv * gv
                    v[i] -= lr * gv / (eps + np.sqrt(acc_v[i]))
    return loss_sum, n_pos, state


@njit(cache=True, nogil=True)
def dbow_train_shard(
    doc_emb,
    acc_doc,
    proj,
    acc_proj,
    weights,
    bias,
    acc_w,
    acc_b,
    terms,
    offsets,
    order,
    seeds,
    epoch_salt,
    alias_prob,
    alias_idx,
    proposal_q,
    n_samples,
    lr,
    eps,
    dropout_p,
    has_proj,
    use_sigmoid,
    loss_out,
    count_out,
    slot,
):
    """One epoch over this shard's documents (order gives doc indices)."""
    d = doc_emb.shape[1]
    k = weights.shape[1]
    n_cand = n_samples + 1 if n_samples > 0 else weights.shape[0]
    mask = np.empty(d)
    x = np.empty(d)
    u_buf = np.empty(k)
    s_buf = np.empty(k)
    code = np.empty(k)
    cand = np.empty(n_cand, np.int64)
    corr = np.empty(n_cand)
    logits = np.empty(n_cand)
    g = np.empty(n_cand)
    uid = np.empty(n_cand, np.int64)
    ug = np.empty(n_cand)
    grad_code = np.empty(k)
    gs = np.empty(k)
    gx = np.empty(d)
    total = 0.0
    cnt = 0
    for oi in range(order.shape[0]):
        di = order[oi]
        state = mix64(seeds[di] ^ epoch_salt)
        ls, n_pos, state = _dbow_doc(
            doc_emb[di],
            acc_doc[di],
            proj,
            acc_proj,
            weights,
            bias,
            acc_w,
            acc_b,
            terms,
            offsets[di],
            offsets[di + 1],
            alias_prob,
            alias_idx,
            proposal_q,
            n_samples,
            lr,
            eps,
            dropout_p,
            has_proj,
            use_sigmoid,
            True,
            state,
            mask,
            x,
            u_buf,
            s_buf,
            code,
            cand,
            corr,
            logits,
            g,
            uid,
            ug,
            grad_code,
            gs,
            gx,
        )
        total += ls
        cnt += n_pos
    loss_out[slot] += total
    count_out[slot] += cnt


@njit(cache=True, nogil=True)
def dbow_infer_shard(
    proj,
    weights,
    bias,
    terms,
    offsets,
    indices,
    seeds,
    epoch_salts,
    alias_prob,
    alias_idx,
    proposal_q,
    n_samples,
    lr,
    eps,
    has_proj,
    use_sigmoid,
    out_vectors,
):
    """Fit fresh document vectors against frozen shared parameters.

    epoch_salts[0] seeds the vector initialization; each later entry
    seeds one inference epoch. Accumulators start at zero per document.
    """
    d = out_vectors.shape[1]
    k = weights.shape[1]
    n_cand = n_samples + 1 if n_samples > 0 else weights.shape[0]
    mask = np.empty(d)
    x = np.empty(d)
    u_buf = np.empty(k)
    s_buf = np.empty(k)
    code = np.empty(k)
    cand = np.empty(n_cand, np.int64)
    corr = np.empty(n_cand)
    logits = np.empty(n_cand)
    g = np.empty(n_cand)
    uid = np.empty(n_cand, np.int64)
    ug = np.empty(n_cand)
    grad_code = np.empty(k)
    gs = np.empty(k)
    gx = np.empty(d)
    acc_v = np.empty(d, np.float32)
    dummy_acc_proj = np.zeros((0, 0), np.float32)
    dummy_acc_w = np.zeros((0, 0), np.float32)
    dummy_acc_b = np.zeros(0, np.float32)
    n_epochs = epoch_salts.shape[0] - 1
    for oi in range(indices.shape[0]):
        di = indices[oi]
        v = out_vectors[di]
        state = mix64(seeds[di] ^ epoch_salts[0])
        for i in range(d):
            uu, state = _rng_uniform(state)
            v[i] = (uu - 0.5) / d
        for i in range(d):
            acc_v[i] = 0.0
        for e in range(n_epochs):
            state = mix64(seeds[di] ^ epoch_salts[e + 1])
            ls, n_pos, state = _dbow_doc(
                v,
                acc_v,
                proj,
                dummy_acc_proj,
                weights,
                bias,
                dummy_acc_w,
                dummy_acc_b,
                terms,
                offsets[di],
                offsets[di + 1],
                alias_prob,
                alias_idx,
                proposal_q,
                n_samples,
                lr,
                eps,
                0.0,
                has_proj,
                use_sigmoid,
                False,
                state,
                mask,
                x,
                u_buf,
                s_buf,
                code,
                cand,
                corr,
                logits,
                g,
                uid,
                ug,
                grad_code,
                gs,
                gx,
            )


@njit(cache=True, nogil=True)
def _pvdm_doc(
    v,
    acc_v,
    word_emb,
    acc_word,
    weights,
    bias,
    acc_w,
    acc_b,
    terms,
    start,
    n_words,
    window,
    alias_prob,
    alias_idx,
    proposal_q,
    n_samples,
    lr,
    eps,
    dropout_p,
    update_shared,
    state,
    mask,
    x,
    s_buf,
    code,
    cand,
    corr,
    logits,
    g,
    uid,
    ug,
    grad_code,
    gs,
    wids,
    wgrad,
):
    """All (context, target) positions of one document.

    The concatenation is [doc vector, context embeddings in window
    order]; dropout draws run over the whole concatenation in that
    order. Only unigram positions participate.
    """
    c = v.shape[0]
    dw = word_emb.shape[1]
    k = c + window * dw
    vocab = weights.shape[0]
    inv_keep = 1.0 / (1.0 - dropout_p) if dropout_p > 0.0 else 1.0
    loss_sum = 0.0
    n_pos = 0
    for t in range(window, n_words):
        target = terms[start + t]
        for i in range(k):
            if dropout_p > 0.0:
                uu, state = _rng_uniform(state)
                mask[i] = 0.0 if uu < dropout_p else inv_keep
            else:
                mask[i] = 1.0
        for i in range(c):
            x[i] = v[i] * mask[i]
        for wpos in range(window):
            cid = terms[start + t - window + wpos]
            base = c + wpos * dw
            for i2 in range(dw):
                x[base + i2] = word_emb[cid, i2] * mask[base + i2]
        for i in range(k):
            z = x[i]
            if z >= 0.0:
                s_buf[i] = 1.0 / (1.0 + np.exp(-z))
                code[i] = 1.0
            else:
                ez = np.exp(z)
                s_buf[i] = ez / (1.0 + ez)
                code[i] = 0.0
        if n_samples > 0:
            n_cand = n_samples + 1
            cand[0] = target
            corr[0] = 0.0
            for j in range(1, n_cand):
                while True:
                    sid, state = _alias_draw(alias_prob, alias_idx, state)
                    if sid != target:
                        break
                cand[j] = sid
                corr[j] = np.log(n_samples * proposal_q[sid])
        else:
            n_cand = vocab
            cand[0] = target
            idx = 1
            for r in range(vocab):
                if r != target:
                    cand[idx] = r
                    idx += 1
            for j in range(n_cand):
                corr[j] = 0.0
        mx = -1.0e300
        for j in range(n_cand):
            r = cand[j]
            z = bias[r] - corr[j]
            for i in range(k):
                z += weights[r, i] * code[i]
            logits[j] = z
            if z > mx:
                mx = z
        zsum = 0.0
        for j in range(n_cand):
            e = np.exp(logits[j] - mx)
            g[j] = e
            zsum += e
        loss_sum += np.log(zsum) + mx - logits[0]
        n_pos += 1
        for j in range(n_cand):
            g[j] = g[j] / zsum
        g[0] -= 1.0
        for i in range(k):
            acc = 0.0
            for j in range(n_cand):
                acc += g[j] * weights[cand[j], i]
            grad_code[i] = acc
        if update_shared:
            n_u = 0
            for j in range(n_cand):
                r = cand[j]
                found = -1
                for q in range(n_u):
                    if uid[q] == r:
                        found = q
                        break
                if found >= 0:
                    ug[found] += g[j]
                else:
                    uid[n_u] = r
                    ug[n_u] = g[j]
                    n_u += 1
            for q in range(n_u):
                r = uid[q]
                gamma = ug[q]
                for i in range(k):
                    gr = gamma * code[i]
                    if gr != 0.0:
                        acc_w[r, i] += gr * gr
                        weights[r, i] -= lr * gr / (eps + np.sqrt(acc_w[r, i]))
                acc_b[r] += gamma * gamma
                bias[r] -= lr * gamma / (eps + np.sqrt(acc_b[r]))
        for i in range(k):
            gs[i] = grad_code[i] * s_buf[i] * (1.0 - s_buf[i])
        if update_shared:
            # merge duplicate context ids so each word row steps once
            n_wu = 0
            for wpos in range(window):
                cid = terms[start + t - window + wpos]
                base = c + wpos * dw
                found = -1
                for q in range(n_wu):
                    if wids[q] == cid:
                        found = q
                        break
                if found >= 0:
                    for i2 in range(dw):
                        wgrad[found, i2] += gs[base + i2] * mask[base + i2]
                else:
                    wids[n_wu] = cid
                    for i2 in range(dw):
                        wgrad[n_wu, i2] = gs[base + i2] * mask[base + i2]
                    n_wu += 1
            for q in range(n_wu):
                r = wids[q]
                for i2 in range(dw):
                    gw = wgrad[q, i2]
                    if gw != 0.0:
                        acc_word[r, i2] += gw * gw
                        word_emb[r, i2] -= lr * gw / (eps + np.sqrt(acc_word[r, i2]))
        for i in range(c):
            gv = gs[i] * mask[i]
            if gv != 0.0:
                acc_v[i] += gv * gv
                v[i] -= lr * gv / (eps + np.sqrt(acc_v[i]))
    return loss_sum, n_pos, state


@njit(cache=True, nogil=True)
def pvdm_train_shard(
    doc_emb,
    acc_doc,
    word_emb,
    acc_word,
    weights,
    bias,
    acc_w,
    acc_b,
    terms,
    offsets,
    n_words_arr,
    window,
    order,
    seeds,
    epoch_salt,
    alias_prob,
    alias_idx,
    proposal_q,
    n_samples,
    lr,
    eps,
    dropout_p,
    loss_out,
    count_out,
    slot,
):
    c = doc_emb.shape[1]
    dw = word_emb.shape[1]
    k = c + window * dw
    n_cand = n_samples + 1 if n_samples > 0 else weights.shape[0]
    mask = np.empty(k)
    x = np.empty(k)
    s_buf = np.empty(k)
    code = np.empty(k)
    cand = np.empty(n_cand, np.int64)
    corr = np.empty(n_cand)
    logits = np.empty(n_cand)
    g = np.empty(n_cand)
    uid = np.empty(n_cand, np.int64)
    ug = np.empty(n_cand)
    grad_code = np.empty(k)
    gs = np.empty(k)
    wids = np.empty(window, np.int64)
    wgrad = np.empty((window, dw))
    total = 0.0
    cnt = 0
    for oi in range(order.shape[0]):
        di = order[oi]
        state = mix64(seeds[di] ^ epoch_salt)
        ls, n_pos, state = _pvdm_doc(
            doc_emb[di],
            acc_doc[di],
            word_emb,
            acc_word,
            weights,
            bias,
            acc_w,
            acc_b,
            terms,
            offsets[di],
            n_words_arr[di],
            window,
            alias_prob,
            alias_idx,
            proposal_q,
            n_samples,
            lr,
            eps,
            dropout_p,
            True,
            state,
            mask,
            x,
            s_buf,
            code,
            cand,
            corr,
            logits,
            g,
            uid,
            ug,
            grad_code,
            gs,
            wids,
            wgrad,
        )
        total += ls
        cnt += n_pos
    loss_out[slot] += total
    count_out[slot] += cnt


@njit(cache=True, nogil=True)
def pvdm_infer_shard(
    word_emb,
    weights,
    bias,
    terms,
    offsets,
    n_words_arr,
    window,
    indices,
    seeds,
    epoch_salts,
    alias_prob,
    alias_idx,
    proposal_q,
    n_samples,
    lr,
    eps,
    out_vectors,
):
    c = out_vectors.shape[1]
    dw = word_emb.shape[1]
    k = c + window * dw
    n_cand = n_samples + 1 if n_samples > 0 else weights.shape[0]
    mask = np.empty(k)
    x = np.empty(k)
    s_buf = np.empty(k)
    code = np.empty(k)
    cand = np.empty(n_cand, np.int64)
    corr = np.empty(n_cand)
    logits = np.empty(n_cand)
    g = np.empty(n_cand)
    uid = np.empty(n_cand, np.int64)
    ug = np.empty(n_cand)
    grad_code = np.empty(k)
    gs = np.empty(k)
    wids = np.empty(window, np.int64)
    wgrad = np.empty((window, dw))
    acc_v = np.empty(c, np.float32)
    dummy_acc_word = np.zeros((0, 0), np.float32)
    dummy_acc_w = np.zeros((0, 0), np.float32)
    dummy_acc_b = np.zeros(0, np.float32)
    n_epochs = epoch_salts.shape[0] - 1
    for oi in range(indices.shape[0]):
        di = indices[oi]
        v = out_vectors[di]
        state = mix64(seeds[di] ^ epoch_salts[0])
        for i in range(c):
            uu, state = _rng_uniform(state)
            v[i] = (uu - 0.5) / c
        for i in range(c):
            acc_v[i] = 0.0
        for e in range(n_epochs):
            state = mix64(seeds[di] ^ epoch_salts[e + 1])
            ls, n_pos, state = _pvdm_doc(
                v,
                acc_v,
                word_emb,
                dummy_acc_word,
                weights,
                bias,
                dummy_acc_w,
                dummy_acc_b,
                terms,
                offsets[di],
                n_words_arr[di],
                window,
                alias_prob,
                alias_idx,
                proposal_q,
                n_samples,
                lr,
                eps,
                0.0,
                False,
                state,
                mask,
                x,
                s_buf,
                code,
                cand,
                corr,
                logits,
                g,
                uid,
                ug,
                grad_code,
                gs,
                wids,
                wgrad,
            )
