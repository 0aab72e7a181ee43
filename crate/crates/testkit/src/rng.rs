//! Seeded RNG and random evaluation instances. Hand-rolled xorshift so the
//! suites control determinism precisely and can report a failing seed.

use ros_core::domain::{Annotation, BodySystem, Detection, Span, Status};

/// xorshift64* generator; good enough spread for test-case shaping.
#[derive(Debug, Clone)]
pub struct TestRng(u64);

impl TestRng {
    pub fn new(seed: u64) -> Self {
        // Zero is a fixed point of xorshift; nudge it.
        Self(seed.max(1))
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.0;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.0 = x;
        x.wrapping_mul(0x2545_F491_4F6C_DD1D)
    }

    /// Uniform value in `0..n` (`n > 0`).
    pub fn below(&mut self, n: u64) -> u64 {
        self.next_u64() % n
    }

    /// True with probability `num/den`.
    pub fn chance(&mut self, num: u64, den: u64) -> bool {
        self.below(den) < num
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}

/// One randomly shaped matching problem.
#[derive(Debug, Clone)]
pub struct EvalInstance {
    pub annotations: Vec<Annotation>,
    pub detections: Vec<Detection>,
}

const STATUSES: [Status; 2] = [Status::Positive, Status::Negative];

fn random_status(rng: &mut TestRng) -> Status {
    STATUSES[rng.below(2) as usize]
}

fn random_system(rng: &mut TestRng) -> BodySystem {
    BodySystem::ALL[rng.below(BodySystem::ALL.len() as u64) as usize]
}

fn detection(span: Option<Span>, rng: &mut TestRng, tag: usize) -> Detection {
    Detection {
        extract: format!("e{tag}"),
        status: random_status(rng),
        // Mostly labelled; occasionally a system-less record, as a file
        // edited by hand might contain.
        system: if rng.chance(1, 20) {
            None
        } else {
            Some(random_system(rng))
        },
        span,
        raw_ner: String::new(),
        raw_cls: None,
    }
}

/// Generate a random instance: up to five disjoint gold spans, detections
/// covering the interesting shapes (exact, duplicated exact, shifted
/// overlap, contained, split in two, missed entirely) plus disjoint and
/// unlocated noise, in shuffled order.
pub fn random_instance(rng: &mut TestRng) -> EvalInstance {
    let n_ann = rng.below(6) as usize;
    let mut annotations = Vec::with_capacity(n_ann);
    let mut cursor = 0usize;
    for i in 0..n_ann {
        let start = cursor + 1 + rng.below(8) as usize;
        let end = start + 2 + rng.below(10) as usize;
        cursor = end;
        annotations.push(Annotation {
            span: Span::new(start, end),
            surface: format!("g{i}"),
            status: random_status(rng),
            system: random_system(rng),
        });
    }

    let mut detections = Vec::new();
    let mut tag = 0usize;
    for ann in &annotations {
        let Span { start, end } = ann.span;
        tag += 1;
        match rng.below(10) {
            // Exact hit.
            0..=2 => detections.push(detection(Some(ann.span), rng, tag)),
            // Competing exact duplicates.
            3 => {
                detections.push(detection(Some(ann.span), rng, tag));
                detections.push(detection(Some(ann.span), rng, tag));
            }
            // Shifted overlap (may drift off the gold entirely).
            4..=5 => {
                let shift = rng.below(4) as usize;
                let s = start.saturating_sub(shift) + rng.below(3) as usize;
                let e = (end + rng.below(4) as usize).saturating_sub(rng.below(3) as usize);
                if e > s {
                    detections.push(detection(Some(Span::new(s, e)), rng, tag));
                }
            }
            // Contained sub-span.
            6 => {
                if end - start >= 3 {
                    detections.push(detection(Some(Span::new(start + 1, end - 1)), rng, tag));
                } else {
                    detections.push(detection(Some(ann.span), rng, tag));
                }
            }
            // Split into two pieces.
            7 => {
                if end - start >= 4 {
                    let mid = start + (end - start) / 2;
                    detections.push(detection(Some(Span::new(start, mid)), rng, tag));
                    detections.push(detection(Some(Span::new(mid + 1, end)), rng, tag));
                } else {
                    detections.push(detection(Some(ann.span), rng, tag));
                }
            }
            // Missed: annotation goes undetected.
            _ => {}
        }
    }

    // Noise: spans beyond the gold region, and unlocated detections.
    for _ in 0..rng.below(3) {
        tag += 1;
        if rng.chance(1, 2) {
            let s = cursor + 5 + rng.below(20) as usize;
            detections.push(detection(Some(Span::new(s, s + 1 + rng.below(6) as usize)), rng, tag));
        } else {
            detections.push(detection(None, rng, tag));
        }
    }

    rng.shuffle(&mut detections);
    EvalInstance {
        annotations,
        detections,
    }
}
