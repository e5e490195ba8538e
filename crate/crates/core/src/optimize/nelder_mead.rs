//! Two-dimensional Nelder-Mead with the standard coefficients.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadResult {
    pub x: [f64; 2],
    pub fx: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimizes `f` from the simplex `x0, x0 + step_0 e_0, x0 + step_1 e_1`.
/// Stops when `converged` accepts the (sorted) simplex or after `max_iter`
/// iterations.
pub fn nelder_mead<F, C>(mut f: F, x0: [f64; 2], step: [f64; 2], max_iter: usize, converged: C) -> NelderMeadResult
where
    F: FnMut([f64; 2]) -> f64,
    C: Fn(&[[f64; 2]; 3]) -> bool,
{
    let mut pts = [x0, [x0[0] + step[0], x0[1]], [x0[0], x0[1] + step[1]]];
    let mut vals = pts.map(&mut f);
    let lerp = |a: [f64; 2], b: [f64; 2], t: f64| [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
    let mut iterations = 0;
    loop {
        let mut order = [0usize, 1, 2];
        order.sort_by(|&i, &j| vals[i].total_cmp(&vals[j]));
        pts = order.map(|i| pts[i]);
        vals = order.map(|i| vals[i]);
        if converged(&pts) {
            return NelderMeadResult {
                x: pts[0],
                fx: vals[0],
                iterations,
                converged: true,
            };
        }
        if iterations >= max_iter {
            return NelderMeadResult {
                x: pts[0],
                fx: vals[0],
                iterations,
                converged: false,
            };
        }
        iterations += 1;
        let centroid = lerp(pts[0], pts[1], 0.5);
        let reflected = lerp(centroid, pts[2], -1.0);
        let fr = f(reflected);
        if fr < vals[0] {
            let expanded = lerp(centroid, pts[2], -2.0);
            let fe = f(expanded);
            if fe < fr {
                pts[2] = expanded;
                vals[2] = fe;
            } else {
                pts[2] = reflected;
                vals[2] = fr;
            }
            continue;
        }
        if fr < vals[1] {
            pts[2] = reflected;
            vals[2] = fr;
            continue;
        }
        let (contracted, fc) = if fr < vals[2] {
            let c = lerp(centroid, reflected, 0.5);
            (c, f(c))
        } else {
            let c = lerp(centroid, pts[2], 0.5);
            (c, f(c))
        };
        if fc < vals[2].min(fr) {
            pts[2] = contracted;
            vals[2] = fc;
            continue;
        }
        for i in 1..3 {
            pts[i] = lerp(pts[0], pts[i], 0.5);
            vals[i] = f(pts[i]);
        }
    }
}
