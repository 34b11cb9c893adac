/// Monomials of total degree at most `degree` in `d` variables, graded
/// order, constant first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Basis {
    d: usize,
    exponents: Vec<Vec<u32>>,
}

impl Basis {
    pub fn new(d: usize, degree: usize) -> Self {
        let mut exponents = Vec::new();
        for total in 0..=degree as u32 {
            let mut cur = vec![0u32; d];
            push_compositions(total, 0, &mut cur, &mut exponents);
        }
        Self { d, exponents }
    }

    /// Number of terms, `C(d + degree, d)`.
    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn exponents(&self) -> &[Vec<u32>] {
        &self.exponents
    }

    pub fn eval_into(&self, u: &[f64], out: &mut [f64]) {
        for (o, e) in out.iter_mut().zip(&self.exponents) {
            *o = e.iter().zip(u).map(|(&k, &v)| v.powi(k as i32)).product();
        }
    }

    pub fn eval(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.eval_into(u, &mut out);
        out
    }
}

fn push_compositions(remaining: u32, pos: usize, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if pos + 1 == cur.len() {
        cur[pos] = remaining;
        out.push(cur.clone());
        cur[pos] = 0;
        return;
    }
    for k in (0..=remaining).rev() {
        cur[pos] = k;
        push_compositions(remaining - k, pos + 1, cur, out);
    }
    cur[pos] = 0;
}
