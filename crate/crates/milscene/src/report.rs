//! Text outputs: training log TSV, confusion CSV, K-sweep table,
//! synthetic ground truth CSV.

use std::fmt::Write as _;

use milscene_core::data::InstanceTruth;
use milscene_core::train::{ConfusionMatrix, EpochRecord};

pub const LOG_HEADER: &str = "epoch\ttrain_loss\tval_accuracy\tlearning_rate";

/// One line per epoch. Floats use the shortest round-trip form so equal
/// runs produce equal bytes.
pub fn log_line(r: &EpochRecord) -> String {
    format!("{}\t{:?}\t{:?}\t{:?}", r.epoch, r.train_loss, r.val_accuracy, r.learning_rate)
}

pub fn training_log(records: &[EpochRecord]) -> String {
    let mut s = String::from(LOG_HEADER);
    s.push('\n');
    for r in records {
        s.push_str(&log_line(r));
        s.push('\n');
    }
    s
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Rows are true classes, columns predicted; a trailing `recall` column.
pub fn confusion_csv(cm: &ConfusionMatrix, class_names: &[String]) -> String {
    let mut s = String::from("true\\predicted");
    for name in class_names {
        s.push(',');
        s.push_str(&csv_field(name));
    }
    s.push_str(",recall\n");
    for (t, name) in class_names.iter().enumerate() {
        s.push_str(&csv_field(name));
        for p in 0..cm.classes() {
            write!(s, ",{}", cm.count(t, p)).unwrap();
        }
        match cm.recall(t) {
            Some(r) => writeln!(s, ",{r:.4}").unwrap(),
            None => s.push_str(",\n"),
        }
    }
    s
}

pub fn sweep_table(rows: &[(usize, f64)]) -> String {
    let mut s = String::from("k\tbest_val_accuracy\n");
    for (k, acc) in rows {
        writeln!(s, "{k}\t{acc:?}").unwrap();
    }
    s
}

/// `clip_id,class,instance` for every positive instance.
pub fn truth_csv(ids: &[String], truth: &[InstanceTruth]) -> String {
    let mut s = String::from("clip_id,class,instance\n");
    for (id, t) in ids.iter().zip(truth) {
        for l in 0..t.classes() {
            for j in t.positives(l) {
                writeln!(s, "{},{l},{j}", csv_field(id)).unwrap();
            }
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confusion_csv_layout() {
        let cm = ConfusionMatrix::from_pairs(2, [(0, 0), (0, 1), (1, 1)]).unwrap();
        let csv = confusion_csv(&cm, &["bus".into(), "park".into()]);
        assert_eq!(csv, "true\\predicted,bus,park,recall\nbus,1,1,0.5000\npark,0,1,1.0000\n");
    }

    #[test]
    fn log_is_tab_separated() {
        let r = EpochRecord { epoch: 3, train_loss: 0.25, val_accuracy: 0.5, learning_rate: 0.001 };
        assert_eq!(log_line(&r), "3\t0.25\t0.5\t0.001");
    }
}
