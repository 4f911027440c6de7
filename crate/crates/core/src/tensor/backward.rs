use crate::error::{Error, Result};
use crate::scalar::{gemm_rowmajor, Scalar};
use crate::tensor::tape::{col2im_accumulate, gelu_grad, im2col, OpNode, PadMode, Sabotage, Tape, Var};
use crate::tensor::{dims2, dims3};

impl<E: Scalar> Tape<E> {
    /// Reverse-mode sweep from a scalar `loss`. Every reachable node that
    /// needs a gradient is visited exactly once, in reverse topological
    /// order; gradients accumulate additively across multiple uses.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let lt = &self.nodes[loss.0];
        if !lt.is_scalar() {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                lt.shape()
            )));
        }

        // Ancestors of the loss, restricted to nodes that need gradients.
        let mut live = vec![false; self.nodes.len()];
        let mut stack = vec![loss.0];
        while let Some(i) = stack.pop() {
            if live[i] || !self.needs_grad[i] {
                continue;
            }
            live[i] = true;
            for v in self.ops[i].inputs() {
                if !live[v.0] && self.needs_grad[v.0] {
                    stack.push(v.0);
                }
            }
        }
        if !live[loss.0] {
            // Loss does not depend on any gradient-requiring leaf.
            return Ok(());
        }

        self.nodes[loss.0].grad = Some(vec![E::one()]);

        for i in (0..=loss.0).rev() {
            if !live[i] || self.nodes[i].grad.is_none() {
                continue;
            }
            let op = self.ops[i].clone();
            self.propagate(i, &op)?;
        }
        Ok(())
    }

    fn wants(&self, v: Var) -> bool {
        self.needs_grad[v.0]
    }

    fn propagate(&mut self, out: usize, op: &OpNode) -> Result<()> {
        match *op {
            OpNode::Leaf => {}

            OpNode::Matmul { a, b } => {
                let (m, k) = dims2(self.nodes[a.0].shape()).unwrap();
                let n = self.nodes[b.0].shape()[1];
                let da = if self.wants(a) {
                    let gy = self.nodes[out].grad.as_deref().unwrap();
                    let bd = self.nodes[b.0].data();
                    // dA = dC(m×n) · Bᵀ(n×k)
                    let mut da = vec![E::zero(); m * k];
                    gemm_rowmajor(m, n, k, E::one(), gy, false, bd, true, E::zero(), &mut da);
                    if self.sabotage == Some(Sabotage::MatmulLhs) {
                        let f = E::from_f64(1.5);
                        for v in &mut da {
                            *v *= f;
                        }
                    }
                    Some(da)
                } else {
                    None
                };
                let db = if self.wants(b) {
                    let gy = self.nodes[out].grad.as_deref().unwrap();
                    let ad = self.nodes[a.0].data();
                    // dB = Aᵀ(k×m) · dC(m×n)
                    let mut db = vec![E::zero(); k * n];
                    gemm_rowmajor(k, m, n, E::one(), ad, true, gy, false, E::zero(), &mut db);
                    Some(db)
                } else {
                    None
                };
                if let Some(d) = da {
                    self.nodes[a.0].accumulate_grad(&d);
                }
                if let Some(d) = db {
                    self.nodes[b.0].accumulate_grad(&d);
                }
            }

            OpNode::Conv2d { x, w, b, stride } => {
                let (c_in, h, wid) = dims3(self.nodes[x.0].shape()).unwrap();
                let k = self.nodes[w.0].shape()[2];
                let (c_out, oh, ow) = dims3(self.nodes[out].shape()).unwrap();
                let l = oh * ow;
                let ck2 = c_in * k * k;

                let db = if self.wants(b) {
                    let gy = self.nodes[out].grad.as_deref().unwrap();
                    let mut db = vec![E::zero(); c_out];
                    for co in 0..c_out {
                        let mut acc = E::zero();
                        for &v in &gy[co * l..(co + 1) * l] {
                            acc += v;
                        }
                        db[co] = acc;
                    }
                    Some(db)
                } else {
                    None
                };
                let dw = if self.wants(w) {
                    let gy = self.nodes[out].grad.as_deref().unwrap();
                    let col = im2col(self.nodes[x.0].data(), c_in, h, wid, k, stride, oh, ow);
                    // dW = dY(c_out×L) · colᵀ(L×ck²)
                    let mut dw = vec![E::zero(); c_out * ck2];
                    gemm_rowmajor(c_out, l, ck2, E::one(), gy, false, &col, true, E::zero(), &mut dw);
                    Some(dw)
                } else {
                    None
                };
                let dx = if self.wants(x) {
                    let gy = self.nodes[out].grad.as_deref().unwrap();
                    let wd = self.nodes[w.0].data();
                    // dcol = Wᵀ(ck²×c_out) · dY(c_out×L), then scatter back.
                    let mut dcol = vec![E::zero(); ck2 * l];
                    gemm_rowmajor(ck2, c_out, l, E::one(), wd, true, gy, false, E::zero(), &mut dcol);
                    let mut dx = vec![E::zero(); c_in * h * wid];
                    col2im_accumulate(&dcol, c_in, h, wid, k, stride, oh, ow, &mut dx);
                    Some(dx)
                } else {
                    None
                };
                if let Some(d) = dx {
                    self.nodes[x.0].accumulate_grad(&d);
                }
                if let Some(d) = dw {
                    self.nodes[w.0].accumulate_grad(&d);
                }
                if let Some(d) = db {
                    self.nodes[b.0].accumulate_grad(&d);
                }
            }

            OpNode::DepthToSpace { x, scale } => {
                if self.wants(x) {
                    let (c_in, h, w) = dims3(self.nodes[x.0].shape()).unwrap();
                    let c_out = c_in / (scale * scale);
                    let (oh, ow) = (h * scale, w * scale);
                    let gy = self.nodes[out].grad.as_deref().unwrap();
                    let mut dx = vec![E::zero(); c_in * h * w];
                    for c in 0..c_out {
                        for i in 0..scale {
                            for j in 0..scale {
                                let ci = c * scale * scale + i * scale + j;
                                for y in 0..h {
                                    for x_ in 0..w {
                                        dx[ci * h * w + y * w + x_] =
                                            gy[c * oh * ow + (y * scale + i) * ow + (x_ * scale + j)];
                                    }
                                }
                            }
                        }
                    }
                    self.nodes[x.0].accumulate_grad(&dx);
                }
            }

            OpNode::Softmax { x } => {
                if self.wants(x) {
                    let p = self.nodes[out].data();
                    let gy = self.nodes[out].grad.as_deref().unwrap();
                    let d = *self.nodes[out].shape().last().unwrap();
                    let rows = p.len() / d;
                    let mut dx = vec![E::zero(); p.len()];
                    for r in 0..rows {
                        let pr = &p[r * d..(r + 1) * d];
                        let gr = &gy[r * d..(r + 1) * d];
                        let mut dot = E::zero();
                        for (pv, gv) in pr.iter().zip(gr) {
                            dot += *pv * *gv;
                        }
                        for i in 0..d {
                            dx[r * d + i] = pr[i] * (gr[i] - dot);
                        }
                    }
                    self.nodes[x.0].accumulate_grad(&dx);
                }
            }

            OpNode::LayerNorm { x, gain, shift, eps } => {
                let d = *self.nodes[x.0].shape().last().unwrap();
                let rows = self.nodes[x.0].numel() / d;
                let dn = E::from_f64(d as f64);
                let epse = E::from_f64(eps);

                let (dx, dg, ds) = {
                    let gy = self.nodes[out].grad.as_deref().unwrap();
                    let xd = self.nodes[x.0].data();
                    let g = self.nodes[gain.0].data();
                    let mut dx = if self.wants(x) { vec![E::zero(); xd.len()] } else { vec![] };
                    let mut dg = if self.wants(gain) { vec![E::zero(); d] } else { vec![] };
                    let mut ds = if self.wants(shift) { vec![E::zero(); d] } else { vec![] };
                    for r in 0..rows {
                        let row = &xd[r * d..(r + 1) * d];
                        let gr = &gy[r * d..(r + 1) * d];
                        let mut mean = E::zero();
                        for &v in row {
                            mean += v;
                        }
                        mean /= dn;
                        let mut var = E::zero();
                        for &v in row {
                            let c = v - mean;
                            var += c * c;
                        }
                        var /= dn;
                        let inv = (var + epse).sqrt().recip();
                        if !dg.is_empty() || !ds.is_empty() || !dx.is_empty() {
                            for i in 0..d {
                                let xhat = (row[i] - mean) * inv;
                                if !dg.is_empty() {
                                    dg[i] += gr[i] * xhat;
                                }
                                if !ds.is_empty() {
                                    ds[i] += gr[i];
                                }
                            }
                        }
                        if !dx.is_empty() {
                            // dx = inv · (a − mean(a) − x̂ · mean(a∘x̂)),  a = gy∘gain
                            let mut mean_a = E::zero();
                            let mut mean_ax = E::zero();
                            for i in 0..d {
                                let a = gr[i] * g[i];
                                let xhat = (row[i] - mean) * inv;
                                mean_a += a;
                                mean_ax += a * xhat;
                            }
                            mean_a /= dn;
                            mean_ax /= dn;
                            for i in 0..d {
                                let a = gr[i] * g[i];
                                let xhat = (row[i] - mean) * inv;
                                dx[r * d + i] = inv * (a - mean_a - xhat * mean_ax);
                            }
                        }
                    }
                    (dx, dg, ds)
                };
                if !dx.is_empty() {
                    self.nodes[x.0].accumulate_grad(&dx);
                }
                if !dg.is_empty() {
                    self.nodes[gain.0].accumulate_grad(&dg);
                }
                if !ds.is_empty() {
                    self.nodes[shift.0].accumulate_grad(&ds);
                }
            }

            OpNode::Add { a, b } => {
                let gy = self.nodes[out].grad.clone().unwrap();
                if self.wants(a) {
                    self.nodes[a.0].accumulate_grad(&gy);
                }
                if self.wants(b) {
                    self.nodes[b.0].accumulate_grad(&gy);
                }
            }

            OpNode::Mul { a, b } => {
                let da = if self.wants(a) {
                    let gy = self.nodes[out].grad.as_deref().unwrap();
                    Some(
                        gy.iter()
                            .zip(self.nodes[b.0].data())
                            .map(|(&g, &v)| g * v)
                            .collect::<Vec<_>>(),
                    )
                } else {
                    None
                };
                let db = if self.wants(b) {
                    let gy = self.nodes[out].grad.as_deref().unwrap();
                    Some(
                        gy.iter()
                            .zip(self.nodes[a.0].data())
                            .map(|(&g, &v)| g * v)
                            .collect::<Vec<_>>(),
                    )
                } else {
                    None
                };
                if let Some(d) = da {
                    self.nodes[a.0].accumulate_grad(&d);
                }
                if let Some(d) = db {
                    self.nodes[b.0].accumulate_grad(&d);
                }
            }

            OpNode::Relu { x } => {
                if self.wants(x) {
                    let gy = self.nodes[out].grad.as_deref().unwrap();
                    let dx: Vec<E> = gy
                        .iter()
                        .zip(self.nodes[x.0].data())
                        .map(|(&g, &v)| if v > E::zero() { g } else { E::zero() })
                        .collect();
                    self.nodes[x.0].accumulate_grad(&dx);
                }
            }

            OpNode::Gelu { x } => {
                if self.wants(x) {
                    let gy = self.nodes[out].grad.as_deref().unwrap();
                    let dx: Vec<E> = gy
                        .iter()
                        .zip(self.nodes[x.0].data())
                        .map(|(&g, &v)| g * gelu_grad(v))
                        .collect();
                    self.nodes[x.0].accumulate_grad(&dx);
                }
            }

            OpNode::Scale { x, factor } => {
                if self.wants(x) {
                    let f = E::from_f64(factor);
                    let gy = self.nodes[out].grad.as_deref().unwrap();
                    let dx: Vec<E> = gy.iter().map(|&g| g * f).collect();
                    self.nodes[x.0].accumulate_grad(&dx);
                }
            }

            OpNode::Reshape { x } => {
                if self.wants(x) {
                    let gy = self.nodes[out].grad.clone().unwrap();
                    self.nodes[x.0].accumulate_grad(&gy);
                }
            }

            OpNode::Transpose2d { x } => {
                if self.wants(x) {
                    let (c, r) = dims2(self.nodes[out].shape()).unwrap();
                    let gy = self.nodes[out].grad.as_deref().unwrap();
                    let mut dx = vec![E::zero(); r * c];
                    for i in 0..c {
                        for j in 0..r {
                            dx[j * c + i] = gy[i * r + j];
                        }
                    }
                    self.nodes[x.0].accumulate_grad(&dx);
                }
            }

            OpNode::RepeatRows { x, n } => {
                if self.wants(x) {
                    let d = self.nodes[x.0].numel();
                    let gy = self.nodes[out].grad.as_deref().unwrap();
                    let mut dx = vec![E::zero(); d];
                    for r in 0..n {
                        for i in 0..d {
                            dx[i] += gy[r * d + i];
                        }
                    }
                    self.nodes[x.0].accumulate_grad(&dx);
                }
            }

            OpNode::SliceRows { x, start, len } => {
                if self.wants(x) {
                    let (_, c) = dims2(self.nodes[x.0].shape()).unwrap();
                    let gy = self.nodes[out].grad.as_deref().unwrap();
                    let mut dx = vec![E::zero(); self.nodes[x.0].numel()];
                    dx[start * c..(start + len) * c].copy_from_slice(gy);
                    self.nodes[x.0].accumulate_grad(&dx);
                }
            }

            OpNode::SliceCols { x, start, len } => {
                if self.wants(x) {
                    let (r, c) = dims2(self.nodes[x.0].shape()).unwrap();
                    let gy = self.nodes[out].grad.as_deref().unwrap();
                    let mut dx = vec![E::zero(); r * c];
                    for row in 0..r {
                        for i in 0..len {
                            dx[row * c + start + i] = gy[row * len + i];
                        }
                    }
                    self.nodes[x.0].accumulate_grad(&dx);
                }
            }

            OpNode::ConcatCols { ref parts } => {
                let widths: Vec<usize> = parts.iter().map(|p| self.nodes[p.0].shape()[1]).collect();
                let total: usize = widths.iter().sum();
                let rows = self.nodes[parts[0].0].shape()[0];
                let mut offset = 0;
                for (p, &wc) in parts.iter().zip(&widths) {
                    if self.wants(*p) {
                        let gy = self.nodes[out].grad.as_deref().unwrap();
                        let mut dp = vec![E::zero(); rows * wc];
                        for row in 0..rows {
                            dp[row * wc..(row + 1) * wc]
                                .copy_from_slice(&gy[row * total + offset..row * total + offset + wc]);
                        }
                        self.nodes[p.0].accumulate_grad(&dp);
                    }
                    offset += wc;
                }
            }

            OpNode::Sum { x } => {
                if self.wants(x) {
                    let g = self.nodes[out].grad.as_deref().unwrap()[0];
                    let dx = vec![g; self.nodes[x.0].numel()];
                    self.nodes[x.0].accumulate_grad(&dx);
                }
            }

            OpNode::Mean { x } => {
                if self.wants(x) {
                    let n = self.nodes[x.0].numel();
                    let g = self.nodes[out].grad.as_deref().unwrap()[0] / E::from_f64(n as f64);
                    let dx = vec![g; n];
                    self.nodes[x.0].accumulate_grad(&dx);
                }
            }

            OpNode::L1Loss { a, b } => {
                let n = self.nodes[a.0].numel();
                let scale = self.nodes[out].grad.as_deref().unwrap()[0] / E::from_f64(n as f64);
                let signs: Vec<E> = self.nodes[a.0]
                    .data()
                    .iter()
                    .zip(self.nodes[b.0].data())
                    .map(|(&x, &y)| {
                        if x > y {
                            scale
                        } else if x < y {
                            -scale
                        } else {
                            E::zero()
                        }
                    })
                    .collect();
                if self.wants(a) {
                    self.nodes[a.0].accumulate_grad(&signs);
                }
                if self.wants(b) {
                    let neg: Vec<E> = signs.iter().map(|&s| -s).collect();
                    self.nodes[b.0].accumulate_grad(&neg);
                }
            }

            OpNode::PatchFlatten { x, patch } => {
                if self.wants(x) {
                    let (c, h, w) = dims3(self.nodes[x.0].shape()).unwrap();
                    let (rows, cols) = (h / patch, w / patch);
                    let e = c * patch * patch;
                    let gy = self.nodes[out].grad.as_deref().unwrap();
                    let mut dx = vec![E::zero(); c * h * w];
                    for pr in 0..rows {
                        for pc in 0..cols {
                            let tok = pr * cols + pc;
                            for ch in 0..c {
                                for iy in 0..patch {
                                    for ix in 0..patch {
                                        dx[ch * h * w + (pr * patch + iy) * w + (pc * patch + ix)] =
                                            gy[tok * e + ch * patch * patch + iy * patch + ix];
                                    }
                                }
                            }
                        }
                    }
                    self.nodes[x.0].accumulate_grad(&dx);
                }
            }

            OpNode::PatchUnflatten { x, channels, rows, cols, patch } => {
                if self.wants(x) {
                    let (h, w) = (rows * patch, cols * patch);
                    let e = channels * patch * patch;
                    let gy = self.nodes[out].grad.as_deref().unwrap();
                    let mut dx = vec![E::zero(); rows * cols * e];
                    for pr in 0..rows {
                        for pc in 0..cols {
                            let tok = pr * cols + pc;
                            for ch in 0..channels {
                                for iy in 0..patch {
                                    for ix in 0..patch {
                                        dx[tok * e + ch * patch * patch + iy * patch + ix] =
                                            gy[ch * h * w + (pr * patch + iy) * w + (pc * patch + ix)];
                                    }
                                }
                            }
                        }
                    }
                    self.nodes[x.0].accumulate_grad(&dx);
                }
            }

            OpNode::Pad2d { x, left, top, mode } => {
                if self.wants(x) {
                    let (c, h, w) = dims3(self.nodes[x.0].shape()).unwrap();
                    let (_, oh, ow) = dims3(self.nodes[out].shape()).unwrap();
                    let gy = self.nodes[out].grad.as_deref().unwrap();
                    let mut dx = vec![E::zero(); c * h * w];
                    for ch in 0..c {
                        for oy in 0..oh {
                            for ox in 0..ow {
                                let sy = oy as isize - top as isize;
                                let sx = ox as isize - left as isize;
                                let g = gy[ch * oh * ow + oy * ow + ox];
                                match mode {
                                    PadMode::Zero => {
                                        if sy >= 0 && sy < h as isize && sx >= 0 && sx < w as isize {
                                            dx[ch * h * w + sy as usize * w + sx as usize] += g;
                                        }
                                    }
                                    PadMode::Reflect => {
                                        let ry = super::tape::reflect_index(sy, h);
                                        let rx = super::tape::reflect_index(sx, w);
                                        dx[ch * h * w + ry * w + rx] += g;
                                    }
                                }
                            }
                        }
                    }
                    self.nodes[x.0].accumulate_grad(&dx);
                }
            }

            OpNode::Crop2d { x, height, width } => {
                if self.wants(x) {
                    let (c, h, w) = dims3(self.nodes[x.0].shape()).unwrap();
                    let gy = self.nodes[out].grad.as_deref().unwrap();
                    let mut dx = vec![E::zero(); c * h * w];
                    for ch in 0..c {
                        for y in 0..height {
                            for xx in 0..width {
                                dx[ch * h * w + y * w + xx] = gy[ch * height * width + y * width + xx];
                            }
                        }
                    }
                    self.nodes[x.0].accumulate_grad(&dx);
                }
            }
        }
        Ok(())
    }
}
