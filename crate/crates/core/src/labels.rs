//! The 30-class label space: five grasping poses, six microgestures each.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_CLASSES: usize = 30;
pub const GESTURES_PER_GRASP: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Grasp {
    Cylindrical,
    Spherical,
    Palmar,
    Tip,
    Hook,
}

impl Grasp {
    pub const ALL: [Grasp; 5] = [
        Grasp::Cylindrical,
        Grasp::Spherical,
        Grasp::Palmar,
        Grasp::Tip,
        Grasp::Hook,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn gestures(self) -> [Gesture; GESTURES_PER_GRASP] {
        use Gesture::*;
        match self {
            Grasp::Cylindrical => [Hold, PointerIn, PointerTap, MiddleTap, WristRight, WristLeft],
            Grasp::Spherical => [Hold, PointerIn, PointerTap, MiddleTap, TwoFingerTap, WristUp],
            Grasp::Palmar => [Hold, ThumbTap, ThumbIn, ThumbDown, PointerIn, WristTap],
            Grasp::Tip => [Hold, ThumbTap, ThumbRight, PinkyOut, WristLeft, WristRight],
            Grasp::Hook => [Hold, ThumbTap, ThumbLeft, ThumbIn, PointerIn, Rotate],
        }
    }

    /// Objects used with this grasp during data collection.
    pub fn objects(self) -> [&'static str; 5] {
        match self {
            Grasp::Cylindrical => ["Soda Can", "Paper Cup", "Lotion Box", "Pen Holder", "Beer Bottle"],
            Grasp::Spherical => ["Desktop Vacuum", "Jar Lid", "Cleaning Brush", "Timer", "Gotcha Ball"],
            Grasp::Palmar => [
                "Basket",
                "Paper Bag",
                "Long Cardboard Box",
                "Closet Organizer",
                "Tall Cardboard Box",
            ],
            Grasp::Tip => ["Pen", "Probe", "Crochet Hook", "Glue Stick", "Whiteboard Marker"],
            Grasp::Hook => ["Lunch Bag", "Tool Box", "Yoga Mat Holder", "Double Strap Bag", "Suitcase"],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Gesture {
    Hold,
    PointerIn,
    PointerTap,
    MiddleTap,
    WristRight,
    WristLeft,
    TwoFingerTap,
    WristUp,
    ThumbTap,
    ThumbIn,
    ThumbDown,
    WristTap,
    ThumbRight,
    PinkyOut,
    ThumbLeft,
    Rotate,
}

impl Gesture {
    const ALL: [Gesture; 16] = [
        Gesture::Hold,
        Gesture::PointerIn,
        Gesture::PointerTap,
        Gesture::MiddleTap,
        Gesture::WristRight,
        Gesture::WristLeft,
        Gesture::TwoFingerTap,
        Gesture::WristUp,
        Gesture::ThumbTap,
        Gesture::ThumbIn,
        Gesture::ThumbDown,
        Gesture::WristTap,
        Gesture::ThumbRight,
        Gesture::PinkyOut,
        Gesture::ThumbLeft,
        Gesture::Rotate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Gesture::Hold => "Hold",
            Gesture::PointerIn => "Pointer In",
            Gesture::PointerTap => "Pointer Tap",
            Gesture::MiddleTap => "Middle Tap",
            Gesture::WristRight => "Wrist Right",
            Gesture::WristLeft => "Wrist Left",
            Gesture::TwoFingerTap => "Two-Finger Tap",
            Gesture::WristUp => "Wrist Up",
            Gesture::ThumbTap => "Thumb Tap",
            Gesture::ThumbIn => "Thumb In",
            Gesture::ThumbDown => "Thumb Down",
            Gesture::WristTap => "Wrist Tap",
            Gesture::ThumbRight => "Thumb Right",
            Gesture::PinkyOut => "Pinky Out",
            Gesture::ThumbLeft => "Thumb Left",
            Gesture::Rotate => "Rotate",
        }
    }
}

fn squash(s: &str) -> String {
    s.chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .map(|c| c.to_ascii_lowercase())
        .collect()
}

impl FromStr for Gesture {
    type Err = Error;

    /// Accepts "Pointer In", "PointerIn", "pointer_in" and the like.
    fn from_str(s: &str) -> Result<Self> {
        let key = squash(s);
        Gesture::ALL
            .into_iter()
            .find(|g| squash(g.name()) == key)
            .ok_or_else(|| Error::Unknown {
                kind: "gesture",
                name: s.to_string(),
            })
    }
}

impl FromStr for Grasp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = squash(s);
        Grasp::ALL
            .into_iter()
            .find(|g| squash(&format!("{g:?}")) == key)
            .ok_or_else(|| Error::Unknown {
                kind: "grasp",
                name: s.to_string(),
            })
    }
}

impl fmt::Display for Grasp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl fmt::Display for Gesture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A (grasp, microgesture) pair. Only pairs from the grasp's own gesture set
/// can be constructed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "LabelRepr", into = "LabelRepr")]
pub struct GestureLabel {
    grasp: Grasp,
    gesture: Gesture,
}

#[derive(Serialize, Deserialize)]
struct LabelRepr {
    grasp: Grasp,
    gesture: Gesture,
}

impl TryFrom<LabelRepr> for GestureLabel {
    type Error = Error;
    fn try_from(r: LabelRepr) -> Result<Self> {
        GestureLabel::new(r.grasp, r.gesture)
    }
}

impl From<GestureLabel> for LabelRepr {
    fn from(l: GestureLabel) -> Self {
        LabelRepr {
            grasp: l.grasp,
            gesture: l.gesture,
        }
    }
}

impl GestureLabel {
    pub fn new(grasp: Grasp, gesture: Gesture) -> Result<Self> {
        if grasp.gestures().contains(&gesture) {
            Ok(Self { grasp, gesture })
        } else {
            Err(Error::Unknown {
                kind: "gesture for this grasp",
                name: format!("{grasp}/{gesture}"),
            })
        }
    }

    pub fn from_class_index(index: usize) -> Result<Self> {
        if index >= NUM_CLASSES {
            return Err(Error::Label(index));
        }
        let grasp = Grasp::ALL[index / GESTURES_PER_GRASP];
        let gesture = grasp.gestures()[index % GESTURES_PER_GRASP];
        Ok(Self { grasp, gesture })
    }

    pub fn grasp(&self) -> Grasp {
        self.grasp
    }

    pub fn gesture(&self) -> Gesture {
        self.gesture
    }

    pub fn gesture_index(&self) -> usize {
        self.grasp
            .gestures()
            .iter()
            .position(|g| *g == self.gesture)
            .expect("constructor guarantees membership")
    }

    pub fn class_index(&self) -> usize {
        GESTURES_PER_GRASP * self.grasp.index() + self.gesture_index()
    }

    pub fn all() -> impl Iterator<Item = GestureLabel> {
        (0..NUM_CLASSES).map(|i| GestureLabel::from_class_index(i).unwrap())
    }
}

impl fmt::Display for GestureLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.grasp, self.gesture)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn thirty_distinct_labels_bijective() {
        let labels: Vec<_> = GestureLabel::all().collect();
        assert_eq!(labels.len(), 30);
        let set: HashSet<_> = labels.iter().collect();
        assert_eq!(set.len(), 30);
        for (i, l) in labels.iter().enumerate() {
            assert_eq!(l.class_index(), i);
            assert_eq!(l.class_index(), 6 * l.grasp().index() + l.gesture_index());
        }
        assert!(GestureLabel::from_class_index(30).is_err());
    }

    #[test]
    fn cylindrical_order() {
        let l = GestureLabel::from_class_index(3).unwrap();
        assert_eq!(l.grasp(), Grasp::Cylindrical);
        assert_eq!(l.gesture(), Gesture::MiddleTap);
        let hook_rotate = GestureLabel::new(Grasp::Hook, Gesture::Rotate).unwrap();
        assert_eq!(hook_rotate.class_index(), 29);
    }

    #[test]
    fn foreign_gesture_rejected() {
        assert!(GestureLabel::new(Grasp::Tip, Gesture::Rotate).is_err());
    }

    #[test]
    fn parse_names() {
        assert_eq!("Pointer In".parse::<Gesture>().unwrap(), Gesture::PointerIn);
        assert_eq!("two_finger_tap".parse::<Gesture>().unwrap(), Gesture::TwoFingerTap);
        assert_eq!("hook".parse::<Grasp>().unwrap(), Grasp::Hook);
        assert!("wave".parse::<Gesture>().is_err());
    }

    #[test]
    fn serde_validates_pairs() {
        let ok = serde_json::to_string(&GestureLabel::new(Grasp::Palmar, Gesture::WristTap).unwrap()).unwrap();
        let back: GestureLabel = serde_json::from_str(&ok).unwrap();
        assert_eq!(back.class_index(), 17);
        let bad = r#"{"grasp":"Tip","gesture":"Rotate"}"#;
        assert!(serde_json::from_str::<GestureLabel>(bad).is_err());
    }
}
